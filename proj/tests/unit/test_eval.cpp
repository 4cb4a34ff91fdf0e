#include <doctest.h>

#include <cmath>

#include "coea/errors.hpp"
#include "coea/eval.hpp"
#include "coea/synthetic.hpp"
#include "support/oracles.hpp"

using namespace coea;

namespace {

// Random evaluation fixtures over an 18-category vocabulary.
struct Fixture {
    std::vector<RecommendationList> lists;
    TruthMap truths;
    std::vector<test::OracleUser> oracle_users;
    std::vector<std::string> categories;
    std::set<std::string> tail;
};

Fixture random_fixture(size_t n_users, size_t k, uint64_t seed) {
    Fixture f;
    for (int c = 0; c < 18; ++c)
        f.categories.push_back("cat" + std::string(c < 10 ? "0" : "") + std::to_string(c));
    Rng rng(seed);
    std::map<std::string, size_t> volume;
    for (const auto& c : f.categories) volume[c] = rng.bounded(40);
    f.tail = long_tail_set(volume, f.categories);

    for (size_t u = 0; u < n_users; ++u) {
        RecommendationList list;
        list.user_id = "user" + std::to_string(u);
        auto picks = rng.sample_without_replacement(f.categories.size(), k);
        for (size_t p : picks) list.ranked.push_back(f.categories[p]);

        UserGroundTruth truth;
        test::OracleUser ou;
        ou.top_k = list.ranked;
        for (const auto& c : f.categories) {
            if (rng.next_double() < 0.3) {
                truth.preferred.insert(c);
                ou.preferred.insert(c);
            }
            if (rng.next_double() < 0.4) {
                truth.historical.insert(c);
                ou.historical.insert(c);
            }
            if (rng.next_double() < 0.25) {
                truth.test_clicked.insert(c);
                ou.test_clicked.insert(c);
            }
        }
        f.truths[list.user_id] = truth;
        f.oracle_users.push_back(ou);
        f.lists.push_back(list);
    }
    return f;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("all four metrics match the brute-force oracle") {
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        Fixture f = random_fixture(10, 5, seed);
        CAPTURE(seed);

        double ch = category_hit_rate(f.lists, f.truths, 5);
        CHECK(std::abs(ch - test::oracle_hit_rate(f.oracle_users, 5)) < 1e-9);

        size_t excluded = 0, oracle_skipped = 0;
        double cn = category_ndcg(f.lists, f.truths, 5, &excluded);
        double cn_oracle = test::oracle_ndcg(f.oracle_users, 5, &oracle_skipped);
        CHECK(std::abs(cn - cn_oracle) < 1e-9);
        CHECK(excluded == oracle_skipped);

        double ncp = novel_category_proportion(f.lists, f.truths, 5, 18);
        CHECK(std::abs(ncp - test::oracle_ncp(f.oracle_users, 5, 18)) < 1e-9);

        double cltp = category_long_tail_proportion(f.lists, f.tail, 5, 18);
        CHECK(std::abs(cltp - test::oracle_cltp(f.oracle_users, 5, f.tail, 18)) < 1e-9);
    }
}

TEST_CASE("tail selection matches the oracle") {
    Fixture f = random_fixture(1, 5, 9);
    std::map<std::string, size_t> volume;
    Rng rng(10);
    for (const auto& c : f.categories) volume[c] = rng.bounded(6);
    CHECK(long_tail_set(volume, f.categories) == test::oracle_tail(volume, f.categories));
}

TEST_CASE("hand-checked hit rate: one preferred hit in a top-5 is 0.2") {
    std::vector<RecommendationList> lists{{"u", {"a", "b", "c", "d", "e"}}};
    TruthMap truths;
    truths["u"].preferred = {"c", "z"};
    CHECK(category_hit_rate(lists, truths, 5) == 0.2);
}

TEST_CASE("hand-checked ndcg: single relevant at rank 2 is 1/log2(3)") {
    std::vector<RecommendationList> lists{{"u", {"a", "b", "c", "d", "e"}}};
    TruthMap truths;
    truths["u"].test_clicked = {"b"};
    double cn = category_ndcg(lists, truths, 5);
    CHECK(cn == doctest::Approx(test::kInvLog2Of3).epsilon(1e-12));
    CHECK(std::abs(cn - 0.630930) < 5e-7);  // the rounded textbook value
}

TEST_CASE("hand-checked ncp: two unseen of top-5 over 18 categories is 2/18") {
    std::vector<RecommendationList> lists{{"u", {"a", "b", "c", "d", "e"}}};
    TruthMap truths;
    truths["u"].historical = {"a", "c", "e", "x"};
    CHECK(novel_category_proportion(lists, truths, 5, 18) ==
          doctest::Approx(2.0 / 18.0).epsilon(1e-15));
}

TEST_CASE("hand-checked cltp: two tail entries over 18 categories is 2/18") {
    std::vector<RecommendationList> lists{{"u", {"a", "b", "c", "d", "e"}}};
    CHECK(category_long_tail_proportion(lists, {"b", "d", "q"}, 5, 18) ==
          doctest::Approx(2.0 / 18.0).epsilon(1e-15));
}

TEST_CASE("ndcg excludes users with no relevant top-k entries") {
    std::vector<RecommendationList> lists{{"u1", {"a", "b"}}, {"u2", {"c", "d"}}};
    TruthMap truths;
    truths["u1"].test_clicked = {"a", "b"};
    truths["u2"].test_clicked = {"z"};
    size_t excluded = 0;
    double cn = category_ndcg(lists, truths, 2, &excluded);
    CHECK(excluded == 1);
    CHECK(cn == doctest::Approx(1.0).epsilon(1e-12));  // u1 has a perfect packing

    truths["u1"].test_clicked = {};
    excluded = 0;
    CHECK(category_ndcg(lists, truths, 2, &excluded) == 0.0);
    CHECK(excluded == 2);
}

TEST_CASE("short lists raise DataError naming the user") {
    std::vector<RecommendationList> lists{{"ushort", {"a"}}};
    TruthMap truths;
    truths["ushort"] = {};
    CHECK_THROWS_WITH_AS((void)category_hit_rate(lists, truths, 5),
                         doctest::Contains("ushort"), DataError);
}

TEST_CASE("missing truth raises DataError") {
    std::vector<RecommendationList> lists{{"u", {"a", "b"}}};
    CHECK_THROWS_AS((void)category_hit_rate(lists, {}, 2), DataError);
}

TEST_CASE("long tail takes ceil(20%) lowest volumes with name ties") {
    std::vector<std::string> cats{"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"};
    std::map<std::string, size_t> volume{{"a", 5}, {"b", 1}, {"c", 9}, {"d", 1}, {"e", 7},
                                         {"f", 3}, {"g", 8}, {"h", 6}, {"i", 4}, {"j", 2}};
    // ceil(0.2*10) = 2 -> the two lowest: b(1), d(1) tie broken by name.
    CHECK(long_tail_set(volume, cats) == std::set<std::string>{"b", "d"});
    // An absent category counts zero clicks and lands in the tail.
    volume.erase("e");
    CHECK(long_tail_set(volume, cats) == std::set<std::string>{"b", "e"});
    // 11 categories -> ceil(2.2) = 3.
    std::vector<std::string> cats11 = cats;
    cats11.push_back("k");
    volume["e"] = 7;
    volume["k"] = 0;
    CHECK(long_tail_set(volume, cats11) == std::set<std::string>{"b", "d", "k"});
}

TEST_CASE("evaluate_lists aggregates the four metrics and csv is stable") {
    Fixture f = random_fixture(6, 5, 4);
    MetricReport r = evaluate_lists(f.lists, f.truths, f.tail, 5, 18);
    CHECK(r.n_users == 6);
    CHECK(r.per_user_hit.size() == 6);
    CHECK(r.c_h == doctest::Approx(category_hit_rate(f.lists, f.truths, 5)));
    std::string csv = metric_csv(r);
    CHECK(csv.substr(0, 22) == "metric,K,mean,n_users\n");
    CHECK(csv.find("C-H,5,") != std::string::npos);
    CHECK(csv.find("CLTP,5,") != std::string::npos);
    std::string tsv = per_user_tsv(r);
    CHECK(tsv.find("user\thit\tndcg\tncp\tcltp\n") == 0);
}

TEST_CASE("similarity analysis separates well-clustered representations") {
    Rng rng(5);
    std::map<UserId, int> labels;
    auto reps = make_cluster_representations(4, 20, 8, 6.0, 0.3, rng, &labels);
    std::map<UserId, GroupCSID> assignments;
    for (const auto& [user, label] : labels) assignments[user] = {label};
    auto groups = build_groups(assignments, reps);
    size_t skipped = 0;
    std::vector<GroupCSID> sampled;
    Matrix sim = group_similarity_analysis(groups, reps, 4, 8, rng, &sampled, &skipped);
    CHECK(sim.rows() == 4);
    CHECK(skipped == 0);
    CHECK(sampled.size() == 4);
    CHECK(mean_intra_similarity(sim) > mean_inter_similarity(sim) + 0.2);

    std::string csv = similarity_csv(sim, sampled);
    CHECK(csv.find("group,") == 0);

    // Undersized groups are skipped and counted.
    skipped = 0;
    Matrix none = group_similarity_analysis(groups, reps, 4, 50, rng, nullptr, &skipped);
    CHECK(none.rows() == 0);
    CHECK(skipped == 4);
}

TEST_CASE("category_user_similarity scores zero for zero vectors") {
    Vec cat{1.0, 0.0};
    auto sims = category_user_similarity(cat, {{1.0, 0.0}, {0.0, 2.0}, {0.0, 0.0}});
    REQUIRE(sims.size() == 3);
    CHECK(sims[0] == doctest::Approx(1.0));
    CHECK(sims[1] == doctest::Approx(0.0));
    CHECK(sims[2] == 0.0);
}

}  // TEST_SUITE
