#include <doctest.h>

#include <sstream>

#include "coea/errors.hpp"
#include "coea/ingest.hpp"

using namespace coea;

TEST_SUITE("ingest") {

TEST_CASE("vocab sorts names and resolves indices") {
    Vocab v({"Drama", "Action", "Comedy"});
    CHECK(v.size() == 3);
    CHECK(v.name(0) == "Action");
    CHECK(v.name(1) == "Comedy");
    CHECK(v.name(2) == "Drama");
    CHECK(v.index_of("Comedy") == 1);
    CHECK(v.index_of("Horror") == -1);
    CHECK(v.require("Drama") == 2);
    CHECK_THROWS_AS((void)v.require("Horror"), DataError);
}

TEST_CASE("movielens interactions parse ratings and timestamps") {
    std::istringstream in("1::1193::5::978300760\n1::661::3::978302109\n");
    auto events = parse_interactions(in, LogFormat::movielens_1m);
    REQUIRE(events.size() == 2);
    CHECK(events[0].user_id == "1");
    CHECK(events[0].item_id == "1193");
    CHECK(events[0].rating == 5);
    CHECK(events[0].timestamp == 978300760);
}

TEST_CASE("strict mode raises on a malformed line, skip mode records it") {
    std::string text = "1::2::3::4\nbogus line\n2::3::4::5\n";
    {
        std::istringstream in(text);
        CHECK_THROWS_WITH_AS((void)parse_interactions(in, LogFormat::movielens_1m),
                             doctest::Contains("line 2"), DataError);
    }
    {
        std::istringstream in(text);
        ParseReport report;
        auto events = parse_interactions(in, LogFormat::movielens_1m, ParseMode::skip, &report);
        CHECK(events.size() == 2);
        CHECK(report.parsed == 2);
        REQUIRE(report.skipped.size() == 1);
        CHECK(report.skipped[0].line == 2);
    }
}

TEST_CASE("tsv interactions accept an optional rating column") {
    std::istringstream in("u1\ti1\t100\nu1\ti2\t200\t4\n");
    auto events = parse_interactions(in, LogFormat::tsv);
    REQUIRE(events.size() == 2);
    CHECK_FALSE(events[0].rating.has_value());
    CHECK(events[1].rating == 4);
    CHECK(events[1].timestamp == 200);
}

TEST_CASE("movies take their first listed genre") {
    std::istringstream in("1::Toy Story (1995)::Animation|Children's|Comedy\n"
                          "2::Jumanji (1995)::Adventure\n");
    auto items = parse_movielens_movies(in);
    REQUIRE(items.size() == 2);
    CHECK(items[0].item_id == "1");
    CHECK(items[0].category == "Animation");
    CHECK(items[1].category == "Adventure");
}

TEST_CASE("users compress age codes to dense buckets") {
    std::istringstream in("1::F::1::10::48067\n2::M::56::16::70072\n3::M::25::15::55117\n");
    auto users = parse_movielens_users(in);
    REQUIRE(users.size() == 3);
    CHECK(users[0].gender == Gender::female);
    CHECK(users[0].age_bucket == 0);
    CHECK(users[0].occupation == 10);
    CHECK(users[1].age_bucket == 6);
    CHECK(users[2].age_bucket == 2);
}

TEST_CASE("catalog tsv rejects incomplete rows") {
    std::istringstream good("i1\tNews\ni2\tSports\n");
    auto items = parse_catalog_tsv(good);
    CHECK(items.size() == 2);
    std::istringstream bad("i1\n");
    CHECK_THROWS_AS((void)parse_catalog_tsv(bad), DataError);
}

TEST_CASE("build_sequences splits the most recent k_short events") {
    std::vector<InteractionEvent> events;
    for (int t = 0; t < 10; ++t) events.push_back({"u", "i" + std::to_string(t), t, {}});
    auto seqs = build_sequences(events, 3);
    REQUIRE(seqs.count("u") == 1);
    const auto& s = seqs.at("u");
    CHECK(s.long_term.size() == 7);
    CHECK(s.short_term == std::vector<ItemId>{"i7", "i8", "i9"});
    CHECK(s.k_window == 3);
}

TEST_CASE("build_sequences sorts stably by timestamp then input order") {
    std::vector<InteractionEvent> events{
        {"u", "b", 5, {}}, {"u", "a", 5, {}}, {"u", "c", 1, {}}};
    auto seqs = build_sequences(events, 1);
    const auto& s = seqs.at("u");
    CHECK(s.long_term == std::vector<ItemId>{"c", "b"});
    CHECK(s.short_term == std::vector<ItemId>{"a"});
}

TEST_CASE("short window caps at the sequence length") {
    std::vector<InteractionEvent> events{{"u", "x", 1, {}}, {"u", "y", 2, {}}};
    auto seqs = build_sequences(events, 10);
    CHECK(seqs.at("u").long_term.empty());
    CHECK(seqs.at("u").short_term.size() == 2);
}

TEST_CASE("click count filter keeps frequent items in order") {
    UserSequence seq;
    seq.user_id = "u";
    seq.long_term = {"a", "b", "a", "c", "a", "b"};
    auto clicks = long_click_counts(seq);
    CHECK(clicks.at("a") == 3);
    CHECK(clicks.at("b") == 2);
    auto filtered = filter_long_sequence(seq, clicks, 2);
    CHECK(filtered.items == std::vector<ItemId>{"a", "b", "a", "a", "b"});
    auto only_a = filter_long_sequence(seq, clicks, 3);
    CHECK(only_a.items == std::vector<ItemId>{"a", "a", "a"});

    std::unordered_map<ItemId, size_t> missing{{"a", 3}};
    CHECK_THROWS_AS((void)filter_long_sequence(seq, missing, 1), DataError);
}

TEST_CASE("short items map to categories deduplicated in first-occurrence order") {
    UserSequence seq;
    seq.user_id = "u";
    seq.short_term = {"i1", "i2", "i3", "i4"};
    std::unordered_map<ItemId, std::string> catalog{
        {"i1", "News"}, {"i2", "Sports"}, {"i3", "News"}, {"i4", "Arts"}};
    auto cats = map_short_to_categories(seq, catalog);
    CHECK(cats.categories == std::vector<std::string>{"News", "Sports", "Arts"});

    catalog.erase("i3");
    CHECK_THROWS_AS((void)map_short_to_categories(seq, catalog), DataError);
}

TEST_CASE("leave-one-out split holds back the last two events") {
    std::vector<InteractionEvent> events;
    for (int t = 0; t < 5; ++t) events.push_back({"u1", "i" + std::to_string(t), t, {}});
    events.push_back({"u2", "only", 1, {}});
    events.push_back({"u2", "pair", 2, {}});
    auto split = temporal_split(events, SplitPolicy::leave_one_out);
    CHECK(split.train.size() == 3 + 2);  // u1 keeps 3, u2 is train-only
    CHECK(split.valid.size() == 1);
    CHECK(split.test.size() == 1);
    CHECK(split.valid[0].item_id == "i3");
    CHECK(split.test[0].item_id == "i4");
    REQUIRE(split.train_only_users.size() == 1);
    CHECK(split.train_only_users[0] == "u2");
}

TEST_CASE("day-boundary split buckets by day offset") {
    const int64_t day = 86400;
    std::vector<InteractionEvent> events{{"u", "a", 0, {}},
                                         {"u", "b", 2 * day, {}},
                                         {"u", "c", 5 * day, {}}};
    auto split = temporal_split(events, SplitPolicy::day_boundaries, {1, 4});
    CHECK(split.train.size() == 1);
    CHECK(split.valid.size() == 1);
    CHECK(split.test.size() == 1);
    CHECK(split.test[0].item_id == "c");
    CHECK_THROWS_AS((void)temporal_split(events, SplitPolicy::day_boundaries, {4}), UsageError);
}

TEST_CASE("catalog_index keys by item id") {
    auto idx = catalog_index({{"i1", "News"}, {"i2", "Arts"}});
    CHECK(idx.at("i1") == "News");
    CHECK(idx.size() == 2);
}

}  // TEST_SUITE
