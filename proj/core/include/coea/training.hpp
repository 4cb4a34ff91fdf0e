#pragma once

#include <map>
#include <set>

#include "coea/matrix.hpp"
#include "coea/params.hpp"
#include "coea/rng.hpp"
#include "coea/types.hpp"

namespace coea {

// Trainable stand-ins for the fine-tuned LLM roles: a log-linear softmax
// novelty policy and a bilinear reward model, over features a desk-scale run
// can verify gradients on. Feature map: group one-hot concatenated with a
// multi-hot of the (at most two) recent categories.

struct PolicyContext {
    int group = -1;           // group feature index; -1 fires no group feature
    std::vector<int> recent;  // category ids, oldest first, at most two
};

struct NoveltyPolicy {
    size_t n_groups = 0;
    Vocab categories;
    Matrix w;  // n_categories x (n_groups + n_categories)
    Vec b;     // n_categories
};

std::vector<ParamView> policy_param_views(NoveltyPolicy& p);
// Zero parameters: the uniform policy.
NoveltyPolicy init_policy(size_t n_groups, const Vocab& categories);
NoveltyPolicy policy_zeros_like(const NoveltyPolicy& like);

Vec policy_logits(const NoveltyPolicy& p, const PolicyContext& ctx);
Vec policy_log_probs(const NoveltyPolicy& p, const PolicyContext& ctx);
Vec policy_probs(const NoveltyPolicy& p, const PolicyContext& ctx);

// Sample `count` distinct categories from the policy restricted to `allowed`
// ids, by repeated renormalized categorical draws. allowed must be non-empty.
std::vector<int> policy_sample_without_replacement(const NoveltyPolicy& p,
                                                   const PolicyContext& ctx,
                                                   const std::vector<int>& allowed, size_t count,
                                                   Rng& rng);

struct SftExample {
    PolicyContext context;  // categories at t-2 and t-1
    int target;             // category id at t
};

// Per short-term category sequence, one example per position t = 3..n whose
// target category never appears in the user's long-term categories.
std::vector<SftExample> build_sft_examples(const std::vector<std::string>& short_cat_seq,
                                           const std::set<std::string>& long_term_categories,
                                           int group_feature, const Vocab& categories);

// Mean negative log-likelihood of targets under the policy.
double sft_loss_and_grad(const NoveltyPolicy& p, const std::vector<SftExample>& examples,
                         NoveltyPolicy* grads);

struct SftTrainConfig {
    size_t epochs = 100;
    AdamConfig adam;
};
std::vector<double> train_sft(NoveltyPolicy& p, const std::vector<SftExample>& examples,
                              const SftTrainConfig& cfg);

struct RewardModel {
    size_t n_groups = 0;
    Vocab categories;
    size_t d_r = 16;
    Vec ctx_w;   // n_groups + n_categories
    Matrix emb;  // n_categories x d_r
    Matrix bil;  // d_r x (n_groups + n_categories)
};

std::vector<ParamView> reward_param_views(RewardModel& m);
RewardModel init_reward(size_t n_groups, const Vocab& categories, size_t d_r, Rng& rng,
                        double init_scale = 0.1);
RewardModel reward_zeros_like(const RewardModel& like);

// r = e_c . (B phi) + w . phi
double reward_score(const RewardModel& m, const PolicyContext& ctx, int category);

struct PreferencePair {
    PolicyContext context;
    int c_pos = 0;
    int c_neg = 0;
};

// Mean of -log sigma(r(x,c_pos) - r(x,c_neg)).
double rm_loss_and_grad(const RewardModel& m, const std::vector<PreferencePair>& pairs,
                        RewardModel* grads);

struct RmTrainConfig {
    size_t epochs = 100;
    AdamConfig adam;
};
std::vector<double> train_rm(RewardModel& m, const std::vector<PreferencePair>& pairs,
                             const RmTrainConfig& cfg);

// Logistic map of a raw reward score into (0,1).
double normalize_score(double raw);

// Strict threshold filter, input order preserved.
std::vector<ScoredCategory> select_aligned(const std::vector<ScoredCategory>& scored,
                                           double tau_align);

struct PairBuildReport {
    size_t pairs = 0;
    size_t skipped = 0;  // eligible clicks whose surrogate set was exhausted
};

// One pair per click with at least two earlier categories in the user's
// short-term window: c_pos is the clicked category, c_neg a uniform draw from
// the exposure surrogate (the top_p most-clicked categories in the window,
// ties by name) minus everything that user clicked.
std::vector<PreferencePair> build_preference_pairs(
    const std::map<UserId, std::vector<std::string>>& user_category_seqs,
    const std::map<UserId, int>& user_group_feature, const Vocab& categories, size_t top_p,
    Rng& rng, PairBuildReport* report = nullptr);

}  // namespace coea
