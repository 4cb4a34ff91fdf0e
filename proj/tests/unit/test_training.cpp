#include <doctest.h>

#include <cmath>
#include <set>

#include "coea/errors.hpp"
#include "coea/training.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace coea;

namespace {

Vocab cats6() { return Vocab({"c0", "c1", "c2", "c3", "c4", "c5"}); }

NoveltyPolicy random_policy(size_t n_groups, const Vocab& cats, Rng& rng) {
    NoveltyPolicy p = init_policy(n_groups, cats);
    for (double& v : p.w.raw()) v = rng.next_gaussian() * 0.3;
    for (double& v : p.b) v = rng.next_gaussian() * 0.3;
    return p;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("zero-initialized policy is uniform") {
    NoveltyPolicy p = init_policy(3, cats6());
    PolicyContext ctx{1, {0, 4}};
    Vec probs = policy_probs(p, ctx);
    for (double v : probs) CHECK(v == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
    Vec lp = policy_log_probs(p, ctx);
    double sum = 0.0;
    for (double v : lp) sum += std::exp(v);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("logits add the group and recent-category features") {
    NoveltyPolicy p = init_policy(2, cats6());
    p.b[3] = 0.5;
    p.w(3, 1) = 1.0;            // group 1
    p.w(3, 2 + 4) = 2.0;        // category feature for c4
    Vec z = policy_logits(p, PolicyContext{1, {4}});
    CHECK(z[3] == doctest::Approx(3.5));
    Vec no_group = policy_logits(p, PolicyContext{-1, {4}});
    CHECK(no_group[3] == doctest::Approx(2.5));
    // A repeated recent category fires its indicator once.
    Vec repeated = policy_logits(p, PolicyContext{1, {4, 4}});
    CHECK(repeated[3] == doctest::Approx(3.5));
}

TEST_CASE("out-of-range group feature raises DataError") {
    NoveltyPolicy p = init_policy(2, cats6());
    CHECK_THROWS_AS((void)policy_logits(p, PolicyContext{5, {}}), DataError);
}

TEST_CASE("uniform-policy sft loss equals ln(vocab)") {
    NoveltyPolicy p = init_policy(2, cats6());
    std::vector<SftExample> ex{{PolicyContext{0, {1, 2}}, 3}, {PolicyContext{1, {0, 5}}, 4}};
    double loss = sft_loss_and_grad(p, ex, nullptr);
    CHECK(std::abs(loss - std::log(6.0)) < 1e-9);
}

TEST_CASE("sft gradient matches finite differences") {
    Rng rng(1);
    NoveltyPolicy p = random_policy(2, cats6(), rng);
    std::vector<SftExample> ex{{PolicyContext{0, {1, 2}}, 3},
                               {PolicyContext{1, {0, 5}}, 4},
                               {PolicyContext{-1, {2, 2}}, 0}};
    NoveltyPolicy grads = policy_zeros_like(p);
    (void)sft_loss_and_grad(p, ex, &grads);
    auto res = test::finite_difference_check(
        policy_param_views(p), policy_param_views(grads),
        [&]() { return sft_loss_and_grad(p, ex, nullptr); });
    CAPTURE(res.worst);
    CHECK(res.max_rel < 1e-4);
}

TEST_CASE("sft training reduces the loss") {
    Rng rng(2);
    NoveltyPolicy p = init_policy(2, cats6());
    std::vector<SftExample> ex{{PolicyContext{0, {1, 2}}, 3},
                               {PolicyContext{0, {1, 2}}, 3},
                               {PolicyContext{1, {0, 5}}, 4}};
    SftTrainConfig cfg;
    cfg.epochs = 50;
    cfg.adam.lr = 0.05;
    auto trace = train_sft(p, ex, cfg);
    REQUIRE(trace.size() == cfg.epochs + 1);
    CHECK(trace.back() < trace.front());
}

TEST_CASE("build_sft_examples filters targets in long-term categories") {
    Vocab cats = cats6();
    std::vector<std::string> seq{"c0", "c1", "c2", "c3", "c2"};
    std::set<std::string> long_cats{"c3"};
    auto ex = build_sft_examples(seq, long_cats, 7, cats);
    // Positions t=2..4; t=3 has target c3 which is filtered.
    REQUIRE(ex.size() == 2);
    CHECK(ex[0].context.group == 7);
    CHECK(ex[0].context.recent == std::vector<int>{0, 1});
    CHECK(ex[0].target == 2);
    CHECK(ex[1].context.recent == std::vector<int>{2, 3});
    CHECK(ex[1].target == 2);
}

TEST_CASE("reward score is the bilinear form plus the context term") {
    Rng rng(3);
    RewardModel m = init_reward(2, cats6(), 4, rng);
    m.ctx_w[0] = 0.25;
    m.ctx_w[2 + 3] = -0.5;
    PolicyContext ctx{0, {3}};
    int c = 1;
    double expect = m.ctx_w[0] + m.ctx_w[2 + 3];
    for (size_t j = 0; j < m.d_r; ++j)
        expect += m.emb(c, j) * (m.bil(j, 0) + m.bil(j, 2 + 3));
    CHECK(reward_score(m, ctx, c) == doctest::Approx(expect).epsilon(1e-12));
    CHECK_THROWS_AS((void)reward_score(m, ctx, 99), DataError);
}

TEST_CASE("equal-score rm loss equals ln 2") {
    Rng rng(4);
    RewardModel m = init_reward(2, cats6(), 4, rng);
    m.emb.fill(0.0);  // every score collapses to the context term
    std::vector<PreferencePair> pairs{{PolicyContext{0, {1, 2}}, 3, 4}};
    double loss = rm_loss_and_grad(m, pairs, nullptr);
    CHECK(std::abs(loss - test::kLn2) < 1e-9);
}

TEST_CASE("rm gradient matches finite differences and ctx_w stays zero") {
    Rng rng(5);
    RewardModel m = init_reward(2, cats6(), 4, rng);
    for (double& v : m.ctx_w) v = rng.next_gaussian() * 0.2;
    std::vector<PreferencePair> pairs{{PolicyContext{0, {1, 2}}, 3, 4},
                                      {PolicyContext{1, {0}}, 5, 0},
                                      {PolicyContext{-1, {2, 3}}, 1, 2}};
    RewardModel grads = reward_zeros_like(m);
    (void)rm_loss_and_grad(m, pairs, &grads);
    // The context term cancels in every pairwise margin.
    for (double v : grads.ctx_w) CHECK(v == 0.0);
    auto res = test::finite_difference_check(
        reward_param_views(m), reward_param_views(grads),
        [&]() { return rm_loss_and_grad(m, pairs, nullptr); });
    CAPTURE(res.worst);
    CHECK(res.max_rel < 1e-4);
}

TEST_CASE("rm training reduces the loss") {
    Rng rng(6);
    RewardModel m = init_reward(2, cats6(), 4, rng);
    std::vector<PreferencePair> pairs{{PolicyContext{0, {1, 2}}, 3, 4},
                                      {PolicyContext{0, {1, 2}}, 3, 5},
                                      {PolicyContext{1, {0, 3}}, 2, 4}};
    RmTrainConfig cfg;
    cfg.epochs = 60;
    cfg.adam.lr = 0.05;
    auto trace = train_rm(m, pairs, cfg);
    CHECK(trace.back() < trace.front());
}

TEST_CASE("normalize_score is the logistic map") {
    CHECK(normalize_score(0.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(normalize_score(2.0) == doctest::Approx(test::kSigma2).epsilon(1e-15));
    CHECK(normalize_score(-700.0) > 0.0);   // stable on the far tail
    CHECK(normalize_score(700.0) < 1.0);
    CHECK_THROWS_AS((void)normalize_score(std::nan("")), DataError);
}

TEST_CASE("select_aligned keeps strictly-above-threshold entries in order") {
    std::vector<ScoredCategory> scored{{"a", 0.9}, {"b", 0.5}, {"c", 0.51}, {"d", 0.2}};
    auto aligned = select_aligned(scored, 0.5);
    REQUIRE(aligned.size() == 2);
    CHECK(aligned[0].category == "a");
    CHECK(aligned[1].category == "c");  // 0.5 itself is excluded
}

TEST_CASE("policy sampling respects the allowed set and count") {
    Rng rng(7);
    NoveltyPolicy p = random_policy(1, cats6(), rng);
    std::vector<int> allowed{1, 3, 5};
    auto picks = policy_sample_without_replacement(p, PolicyContext{0, {2}}, allowed, 2, rng);
    CHECK(picks.size() == 2);
    std::set<int> uniq(picks.begin(), picks.end());
    CHECK(uniq.size() == 2);
    for (int c : picks) CHECK(std::set<int>{1, 3, 5}.count(c) == 1);
    // Requesting more than available returns everything.
    auto all = policy_sample_without_replacement(p, PolicyContext{0, {2}}, allowed, 10, rng);
    CHECK(all.size() == 3);
    CHECK_THROWS_AS(
        (void)policy_sample_without_replacement(p, PolicyContext{0, {2}}, {}, 1, rng),
        DataError);
}

TEST_CASE("preference pairs draw negatives from the unclicked surrogate") {
    Vocab cats = cats6();
    std::map<UserId, std::vector<std::string>> seqs{
        {"u1", {"c0", "c1", "c2", "c0"}},  // clicks at t=2,3
        {"u2", {"c3", "c4", "c3"}}};       // click at t=2
    std::map<UserId, int> groups{{"u1", 0}, {"u2", 1}};
    Rng rng(8);
    PairBuildReport report;
    auto pairs = build_preference_pairs(seqs, groups, cats, 3, rng, &report);
    CHECK(report.pairs == pairs.size());
    CHECK(pairs.size() == 3);
    // Surrogate = top 3 by volume (c0:2, c3:2, then c1 by name). u1 clicked
    // c0, c1, c2, so its negatives come from {c3}; u2's from {c0, c1}.
    for (const auto& pr : pairs) {
        if (pr.context.group == 0) CHECK(pr.c_neg == cats.require("c3"));
        if (pr.context.group == 1) {
            CHECK((pr.c_neg == cats.require("c0") || pr.c_neg == cats.require("c1")));
        }
    }
    CHECK(pairs[0].context.recent == std::vector<int>{0, 1});
    CHECK(pairs[0].c_pos == 2);
}

TEST_CASE("pairs are skipped when a user clicked the whole surrogate") {
    Vocab cats({"c0", "c1"});
    std::map<UserId, std::vector<std::string>> seqs{{"u1", {"c0", "c1", "c0"}}};
    std::map<UserId, int> groups;
    Rng rng(9);
    PairBuildReport report;
    auto pairs = build_preference_pairs(seqs, groups, cats, 2, rng, &report);
    CHECK(pairs.empty());
    CHECK(report.skipped == 1);
}

}  // TEST_SUITE
