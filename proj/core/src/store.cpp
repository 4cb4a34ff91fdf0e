#include "coea/store.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "coea/errors.hpp"
#include "coea/rng.hpp"

namespace coea {

namespace {

using Json = nlohmann::ordered_json;

std::string record_line(const StoreRecord& rec) {
    Json j;
    j["key"] = rec.key;
    Json cats = Json::array();
    for (const auto& sc : rec.categories) cats.push_back(Json::array({sc.category, sc.score}));
    j["categories"] = std::move(cats);
    j["cycle"] = rec.cycle;
    return j.dump();
}

StoreRecord record_from_line(const std::string& line, size_t lineno, const std::string& path) {
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw DataError(path + ":" + std::to_string(lineno) + ": invalid store record");
    StoreRecord rec;
    try {
        rec.key = j.at("key").get<std::string>();
        for (const auto& entry : j.at("categories"))
            rec.categories.push_back(
                {entry.at(0).get<std::string>(), entry.at(1).get<double>()});
        rec.cycle = j.at("cycle").get<int64_t>();
    } catch (const Json::exception& e) {
        throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    return rec;
}

void validate_record(const StoreRecord& rec) {
    if (rec.key.empty()) throw DataError("store record with empty key");
    std::set<std::string> seen;
    for (const auto& sc : rec.categories) {
        if (!(sc.score > 0.0 && sc.score < 1.0))
            throw DataError("store record " + rec.key + ": score outside (0,1) for " +
                            sc.category);
        if (!seen.insert(sc.category).second)
            throw DataError("store record " + rec.key + ": duplicate category " + sc.category);
    }
}

}  // namespace

CompositeKey make_key(const GroupCSID& csid, const std::vector<std::string>& categories) {
    if (csid.empty()) throw DataError("make_key: empty CSID");
    CompositeKey key;
    key.csid_part = csid_to_string(csid);
    std::vector<std::string> sorted = categories;
    std::sort(sorted.begin(), sorted.end());
    std::string joined;
    for (size_t i = 0; i < sorted.size(); ++i) {
        if (i) joined += ',';
        joined += sorted[i];
    }
    key.category_digest = fnv1a64_hex(joined);
    return key;
}

Store::Store(std::string path) : path_(std::move(path)) {
    std::ifstream in(path_, std::ios::binary);
    if (!in) return;  // fresh store
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        StoreRecord rec = record_from_line(line, lineno, path_);
        index_[rec.key] = std::move(rec);  // last write wins
    }
}

void Store::put(const StoreRecord& rec) {
    validate_record(rec);
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw DataError("cannot append to store: " + path_);
    out << record_line(rec) << '\n';
    if (!out) throw DataError("store write failed: " + path_);
    index_[rec.key] = rec;
}

std::optional<StoreRecord> Store::get(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::optional<StoreRecord> Store::lookup_with_fallback(
    const std::optional<GroupCSID>& csid, const std::vector<std::string>& categories,
    const GroupCSID& default_csid) const {
    if (csid) {
        auto hit = get(make_key(*csid, categories).str());
        if (hit) return hit;
    }
    return get(make_key(default_csid, categories).str());
}

void Store::compact() {
    std::string tmp = path_ + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open for compaction: " + tmp);
        for (const auto& [key, rec] : index_) out << record_line(rec) << '\n';
        if (!out) throw DataError("compaction write failed: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path_, ec);
    if (ec) throw DataError("compaction rename failed: " + path_ + ": " + ec.message());
}

std::string Store::export_tsv() const {
    std::ostringstream out;
    char buf[64];
    for (const auto& [key, rec] : index_) {
        out << key << '\t' << rec.cycle << '\t';
        for (size_t i = 0; i < rec.categories.size(); ++i) {
            if (i) out << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", rec.categories[i].score);
            out << rec.categories[i].category << ':' << buf;
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace coea
