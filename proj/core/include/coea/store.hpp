#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "coea/quantizer.hpp"
#include "coea/types.hpp"

namespace coea {

// Composite key for the aligned-category store: dash-joined CSID, a pipe, and
// the FNV-1a 64 digest of the sorted, comma-joined category names. The digest
// ignores category input order by construction.
struct CompositeKey {
    std::string csid_part;
    std::string category_digest;  // 16 lowercase hex chars
    std::string str() const { return csid_part + "|" + category_digest; }
};

CompositeKey make_key(const GroupCSID& csid, const std::vector<std::string>& categories);

struct StoreRecord {
    std::string key;
    std::vector<ScoredCategory> categories;
    int64_t cycle = 0;
};

// Append-only JSON Lines store with an in-memory index rebuilt on open.
// Last write wins per key; compaction rewrites the file canonically (records
// sorted by key) via an atomic rename.
class Store {
public:
    explicit Store(std::string path);

    void put(const StoreRecord& rec);
    std::optional<StoreRecord> get(const std::string& key) const;

    // Primary key first; on miss (or when the user has no CSID) the default
    // CSID's key; empty when both miss.
    std::optional<StoreRecord> lookup_with_fallback(const std::optional<GroupCSID>& csid,
                                                    const std::vector<std::string>& categories,
                                                    const GroupCSID& default_csid) const;

    void compact();
    size_t size() const { return index_.size(); }
    const std::map<std::string, StoreRecord>& records() const { return index_; }
    const std::string& path() const { return path_; }

    // Full table as `key<TAB>cycle<TAB>cat:score,...` rows, sorted by key.
    std::string export_tsv() const;

private:
    std::string path_;
    std::map<std::string, StoreRecord> index_;
};

}  // namespace coea
