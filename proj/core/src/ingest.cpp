#include "coea/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <set>
#include <sstream>

#include "coea/errors.hpp"

namespace coea {

Vocab::Vocab(std::vector<std::string> names) {
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());
    names_ = std::move(names);
    for (size_t i = 0; i < names_.size(); ++i) index_[names_[i]] = static_cast<int>(i);
}

int Vocab::index_of(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
}

int Vocab::require(const std::string& name) const {
    int id = index_of(name);
    if (id < 0) throw DataError("unknown vocabulary entry: " + name);
    return id;
}

namespace {

std::vector<std::string> split_on(const std::string& line, const std::string& sep) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (true) {
        size_t next = line.find(sep, pos);
        if (next == std::string::npos) {
            out.push_back(line.substr(pos));
            break;
        }
        out.push_back(line.substr(pos, next - pos));
        pos = next + sep.size();
    }
    return out;
}

bool parse_i64(const std::string& s, int64_t& out) {
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

// Returns false if the line should be dropped (handled per mode by caller).
[[noreturn]] void fail_line(size_t lineno, const std::string& what) {
    throw DataError("line " + std::to_string(lineno) + ": " + what);
}

bool handle_bad(ParseMode mode, ParseReport* report, size_t lineno, const std::string& what) {
    if (mode == ParseMode::strict) fail_line(lineno, what);
    if (report) report->skipped.push_back({lineno, what});
    return false;
}

bool blank(const std::string& line) {
    return line.find_first_not_of(" \t\r") == std::string::npos;
}

std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

}  // namespace

std::vector<InteractionEvent> parse_interactions(std::istream& in, LogFormat format, ParseMode mode,
                                                 ParseReport* report) {
    std::vector<InteractionEvent> events;
    std::string raw;
    size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = strip_cr(raw);
        if (blank(line)) continue;
        InteractionEvent ev;
        if (format == LogFormat::movielens_1m) {
            auto f = split_on(line, "::");
            if (f.size() != 4) {
                handle_bad(mode, report, lineno, "expected 4 '::' fields, got " +
                                                     std::to_string(f.size()));
                continue;
            }
            int64_t rating = 0, ts = 0;
            if (f[0].empty() || f[1].empty() || !parse_i64(f[2], rating) || !parse_i64(f[3], ts)) {
                handle_bad(mode, report, lineno, "malformed movielens record");
                continue;
            }
            ev.user_id = f[0];
            ev.item_id = f[1];
            ev.rating = static_cast<int>(rating);
            ev.timestamp = ts;
        } else {
            auto f = split_on(line, "\t");
            if (f.size() != 3 && f.size() != 4) {
                handle_bad(mode, report, lineno,
                           "expected 3 or 4 tab fields, got " + std::to_string(f.size()));
                continue;
            }
            int64_t ts = 0;
            if (f[0].empty() || f[1].empty() || !parse_i64(f[2], ts)) {
                handle_bad(mode, report, lineno, "malformed tsv record");
                continue;
            }
            ev.user_id = f[0];
            ev.item_id = f[1];
            ev.timestamp = ts;
            if (f.size() == 4) {
                int64_t rating = 0;
                if (!parse_i64(f[3], rating)) {
                    handle_bad(mode, report, lineno, "malformed rating field");
                    continue;
                }
                ev.rating = static_cast<int>(rating);
            }
        }
        if (report) ++report->parsed;
        events.push_back(std::move(ev));
    }
    return events;
}

std::vector<CatalogItem> parse_movielens_movies(std::istream& in, ParseMode mode,
                                                ParseReport* report) {
    std::vector<CatalogItem> items;
    std::string raw;
    size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = strip_cr(raw);
        if (blank(line)) continue;
        auto f = split_on(line, "::");
        // Titles may themselves contain "::" only in pathological data; the
        // genre list is always the final field, the id the first.
        if (f.size() < 3 || f[0].empty() || f.back().empty()) {
            handle_bad(mode, report, lineno, "malformed movies record");
            continue;
        }
        auto genres = split_on(f.back(), "|");
        if (genres.empty() || genres[0].empty()) {
            handle_bad(mode, report, lineno, "empty genre list");
            continue;
        }
        if (report) ++report->parsed;
        items.push_back({f[0], genres[0]});
    }
    return items;
}

std::vector<UserAttributes> parse_movielens_users(std::istream& in, ParseMode mode,
                                                  ParseReport* report) {
    // MovieLens age codes ascend 1,18,25,35,45,50,56; map to dense buckets.
    static const std::map<int64_t, int> kAgeBuckets = {{1, 0},  {18, 1}, {25, 2}, {35, 3},
                                                       {45, 4}, {50, 5}, {56, 6}};
    std::vector<UserAttributes> users;
    std::string raw;
    size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = strip_cr(raw);
        if (blank(line)) continue;
        auto f = split_on(line, "::");
        if (f.size() != 5) {
            handle_bad(mode, report, lineno, "expected 5 '::' fields");
            continue;
        }
        int64_t age = 0, occ = 0;
        if (f[0].empty() || !parse_i64(f[2], age) || !parse_i64(f[3], occ)) {
            handle_bad(mode, report, lineno, "malformed users record");
            continue;
        }
        UserAttributes u;
        u.user_id = f[0];
        auto it = kAgeBuckets.find(age);
        u.age_bucket = it == kAgeBuckets.end() ? 0 : it->second;
        u.gender = f[1] == "F" ? Gender::female : (f[1] == "M" ? Gender::male : Gender::unknown);
        u.occupation = static_cast<int>(occ);
        if (report) ++report->parsed;
        users.push_back(std::move(u));
    }
    return users;
}

std::vector<CatalogItem> parse_catalog_tsv(std::istream& in, ParseMode mode, ParseReport* report) {
    std::vector<CatalogItem> items;
    std::string raw;
    size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = strip_cr(raw);
        if (blank(line)) continue;
        auto f = split_on(line, "\t");
        if (f.size() != 2 || f[0].empty() || f[1].empty()) {
            handle_bad(mode, report, lineno, "malformed catalog record");
            continue;
        }
        if (report) ++report->parsed;
        items.push_back({f[0], f[1]});
    }
    return items;
}

std::map<UserId, UserSequence> build_sequences(const std::vector<InteractionEvent>& events,
                                               size_t k_short) {
    std::map<UserId, std::vector<InteractionEvent>> per_user;
    for (const auto& ev : events) per_user[ev.user_id].push_back(ev);

    std::map<UserId, UserSequence> out;
    for (auto& [user, evs] : per_user) {
        std::stable_sort(evs.begin(), evs.end(), [](const auto& a, const auto& b) {
            return a.timestamp < b.timestamp;
        });
        UserSequence seq;
        seq.user_id = user;
        seq.k_window = k_short;
        size_t n = evs.size();
        size_t k = std::min(k_short, n);
        for (size_t i = 0; i < n - k; ++i) seq.long_term.push_back(evs[i].item_id);
        for (size_t i = n - k; i < n; ++i) seq.short_term.push_back(evs[i].item_id);
        out.emplace(user, std::move(seq));
    }
    return out;
}

std::unordered_map<ItemId, size_t> long_click_counts(const UserSequence& seq) {
    std::unordered_map<ItemId, size_t> counts;
    for (const auto& item : seq.long_term) ++counts[item];
    return counts;
}

FilteredLongSequence filter_long_sequence(const UserSequence& seq,
                                          const std::unordered_map<ItemId, size_t>& clicks,
                                          size_t min_clicks) {
    FilteredLongSequence out;
    out.user_id = seq.user_id;
    for (const auto& item : seq.long_term) {
        auto it = clicks.find(item);
        if (it == clicks.end())
            throw DataError("no click count for long-term item " + item + " (user " +
                            seq.user_id + ")");
        if (it->second >= min_clicks) out.items.push_back(item);
    }
    return out;
}

ShortCategorySet map_short_to_categories(const UserSequence& seq,
                                         const std::unordered_map<ItemId, std::string>& catalog) {
    ShortCategorySet out;
    out.user_id = seq.user_id;
    std::set<std::string> seen;
    for (const auto& item : seq.short_term) {
        auto it = catalog.find(item);
        if (it == catalog.end())
            throw DataError("item " + item + " missing from catalog (user " + seq.user_id + ")");
        if (seen.insert(it->second).second) out.categories.push_back(it->second);
    }
    return out;
}

SplitResult temporal_split(const std::vector<InteractionEvent>& events, SplitPolicy policy,
                           const std::vector<int64_t>& boundaries) {
    SplitResult res;
    if (policy == SplitPolicy::leave_one_out) {
        std::map<UserId, std::vector<InteractionEvent>> per_user;
        for (const auto& ev : events) per_user[ev.user_id].push_back(ev);
        for (auto& [user, evs] : per_user) {
            std::stable_sort(evs.begin(), evs.end(), [](const auto& a, const auto& b) {
                return a.timestamp < b.timestamp;
            });
            if (evs.size() < 3) {
                res.train_only_users.push_back(user);
                for (auto& ev : evs) res.train.push_back(std::move(ev));
                continue;
            }
            for (size_t i = 0; i + 2 < evs.size(); ++i) res.train.push_back(std::move(evs[i]));
            res.valid.push_back(std::move(evs[evs.size() - 2]));
            res.test.push_back(std::move(evs[evs.size() - 1]));
        }
        return res;
    }

    if (boundaries.size() != 2 || boundaries[0] > boundaries[1])
        throw UsageError("day_boundaries split needs two ascending day offsets");
    if (events.empty()) return res;
    int64_t t0 = events.front().timestamp;
    for (const auto& ev : events) t0 = std::min(t0, ev.timestamp);
    constexpr int64_t kDay = 86400;
    for (const auto& ev : events) {
        int64_t day = (ev.timestamp - t0) / kDay;
        if (day < boundaries[0])
            res.train.push_back(ev);
        else if (day < boundaries[1])
            res.valid.push_back(ev);
        else
            res.test.push_back(ev);
    }
    return res;
}

std::unordered_map<ItemId, std::string> catalog_index(const std::vector<CatalogItem>& items) {
    std::unordered_map<ItemId, std::string> out;
    for (const auto& it : items) out[it.item_id] = it.category;
    return out;
}

}  // namespace coea
