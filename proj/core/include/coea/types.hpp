#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "coea/errors.hpp"

namespace coea {

using UserId = std::string;
using ItemId = std::string;

struct InteractionEvent {
    UserId user_id;
    ItemId item_id;
    int64_t timestamp = 0;
    std::optional<int> rating;  // parsed when present, ignored by modeling

    bool operator==(const InteractionEvent&) const = default;
};

struct CatalogItem {
    ItemId item_id;
    std::string category;
};

enum class Gender : uint8_t { female = 0, male = 1, unknown = 2 };

struct UserAttributes {
    UserId user_id;
    int age_bucket = 0;
    Gender gender = Gender::unknown;
    int occupation = 0;
};

// Chronological split of one user's events into the long-term window and the
// most recent k_window interactions.
struct UserSequence {
    UserId user_id;
    std::vector<ItemId> long_term;
    std::vector<ItemId> short_term;
    size_t k_window = 0;
};

struct FilteredLongSequence {
    UserId user_id;
    std::vector<ItemId> items;  // order preserved; length T
};

struct ShortCategorySet {
    UserId user_id;
    std::vector<std::string> categories;  // deduplicated, first-occurrence order
};

struct ScoredCategory {
    std::string category;
    double score;
};

// Bidirectional name <-> dense-index mapping with deterministic (sorted)
// ordering; used for both item and category vocabularies.
class Vocab {
public:
    Vocab() = default;
    explicit Vocab(std::vector<std::string> names);

    int index_of(const std::string& name) const;      // -1 when absent
    int require(const std::string& name) const;       // DataError when absent
    const std::string& name(size_t index) const { return names_[index]; }
    size_t size() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }

private:
    std::vector<std::string> names_;
    std::map<std::string, int> index_;
};

}  // namespace coea
