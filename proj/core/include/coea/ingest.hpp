#pragma once

#include <iosfwd>
#include <map>
#include <set>
#include <unordered_map>

#include "coea/types.hpp"

namespace coea {

enum class LogFormat { movielens_1m, tsv };
enum class ParseMode { strict, skip };

struct ParseIssue {
    size_t line = 0;
    std::string message;
};

struct ParseReport {
    size_t parsed = 0;
    std::vector<ParseIssue> skipped;
};

// Interaction logs. MovieLens lines are `UserID::MovieID::Rating::Timestamp`;
// TSV lines are `user<TAB>item<TAB>timestamp[<TAB>rating]`. In strict mode a
// malformed line raises DataError naming the line number; in skip mode it is
// recorded in the report and dropped.
std::vector<InteractionEvent> parse_interactions(std::istream& in, LogFormat format,
                                                 ParseMode mode = ParseMode::strict,
                                                 ParseReport* report = nullptr);

// MovieLens movies.dat: `MovieID::Title::Genre1|Genre2|...`. The first listed
// genre becomes the item's category.
std::vector<CatalogItem> parse_movielens_movies(std::istream& in,
                                                ParseMode mode = ParseMode::strict,
                                                ParseReport* report = nullptr);

// MovieLens users.dat: `UserID::Gender::Age::Occupation::Zip`. Raw MovieLens
// age codes are compressed to dense buckets.
std::vector<UserAttributes> parse_movielens_users(std::istream& in,
                                                  ParseMode mode = ParseMode::strict,
                                                  ParseReport* report = nullptr);

// Generic catalog TSV: `item<TAB>category`.
std::vector<CatalogItem> parse_catalog_tsv(std::istream& in,
                                           ParseMode mode = ParseMode::strict,
                                           ParseReport* report = nullptr);

// Per user: stable-sort events by (timestamp, input order), then split into
// the first N-K and the most recent min(K, N).
std::map<UserId, UserSequence> build_sequences(const std::vector<InteractionEvent>& events,
                                               size_t k_short);

// Per-user click counts over the long-term window.
std::unordered_map<ItemId, size_t> long_click_counts(const UserSequence& seq);

// Keep long-term items whose per-user click count reaches min_clicks; order
// preserved. A long-term item missing from `clicks` raises DataError.
FilteredLongSequence filter_long_sequence(const UserSequence& seq,
                                          const std::unordered_map<ItemId, size_t>& clicks,
                                          size_t min_clicks);

// Map short-term items to categories and deduplicate preserving first
// occurrence. An item missing from the catalog raises DataError.
ShortCategorySet map_short_to_categories(const UserSequence& seq,
                                         const std::unordered_map<ItemId, std::string>& catalog);

enum class SplitPolicy { leave_one_out, day_boundaries };

struct SplitResult {
    std::vector<InteractionEvent> train;
    std::vector<InteractionEvent> valid;
    std::vector<InteractionEvent> test;
    // Users with too few events for leave-one-out; their events all go to train.
    std::vector<UserId> train_only_users;
};

// leave_one_out: per user, last event -> test, second-last -> valid, rest ->
// train; users with fewer than 3 events are train-only and flagged.
// day_boundaries: `boundaries` holds two ascending day offsets (in days from
// the earliest event); events before day boundaries[0] -> train, before
// boundaries[1] -> valid, rest -> test.
SplitResult temporal_split(const std::vector<InteractionEvent>& events, SplitPolicy policy,
                           const std::vector<int64_t>& boundaries = {});

std::unordered_map<ItemId, std::string> catalog_index(const std::vector<CatalogItem>& items);

}  // namespace coea
