#pragma once

#include <optional>

#include "coea/gateway.hpp"
#include "coea/store.hpp"
#include "coea/training.hpp"

namespace coea {

// Periodic Collaborative Optimization: each cycle freezes the previous
// policy as the DPO reference, scores fresh candidates with the reward model,
// fine-tunes the policy on extreme-scored pairs plus a 1% replay subset, and
// refreshes the aligned-category store.

struct CycleState {
    size_t cycle = 0;
    NoveltyPolicy policy;
    NoveltyPolicy ref;                    // frozen at cycle start
    std::vector<PreferencePair> dataset;  // accumulated D_k
    double alpha = 0.4;
    double beta = 0.1;
};

// One generation context: a composite (CSID, short-category) key plus the
// structured features the simulated backend needs.
struct PcoContext {
    GroupCSID csid;
    int group_feature = -1;
    std::string profile_text;
    std::vector<std::string> short_categories;  // ordered C'_short
    std::vector<int> excluded_ids;              // C'_short as category ids
    std::vector<int> history_ids;               // categories counted as already engaged
};

struct CycleInputs {
    std::vector<PcoContext> contexts;
    // Fresh click-derived pairs for this cycle (reward-model refresh + replay
    // pool); may be empty.
    std::vector<PreferencePair> behavior_pairs;
};

struct PcoConfig {
    double alpha = 0.4;
    double beta = 0.1;
    size_t steps = 5;
    size_t batch_size = 64;
    size_t m_cand = 8;
    double tau_align = 0.5;
    bool retrain_reward = true;
    size_t rm_epochs = 1;
    AdamConfig adam{0.05, 0.9, 0.999, 1e-8};
    AdamConfig rm_adam{0.01, 0.9, 0.999, 1e-8};
};

struct CycleReport {
    size_t cycle = 0;
    double mean_relevance = 0.0;  // mean normalized score over aligned categories
    double novelty_rate = 0.0;    // aligned categories outside history / aligned total
    double dpo_loss = 0.0;        // value at the last optimizer step
    double kl_loss = 0.0;
    size_t aligned_total = 0;
    size_t pairs_fresh = 0;
    size_t pairs_replay = 0;
    size_t contexts_skipped = 0;  // contexts whose candidate set came back empty
    bool fine_tune_skipped = false;
    std::vector<double> dpo_trace;
    std::vector<double> kl_trace;
};

// Uniform without-replacement sample of floor(0.01 |dataset|) records.
std::vector<PreferencePair> sample_subset(const std::vector<PreferencePair>& dataset, Rng& rng);

// Mean DPO loss -log sigma(beta * [(log pi - log ref)(c_pos) - (log pi -
// log ref)(c_neg)]). Policy and ref must share vocabulary and feature shape.
double dpo_loss_and_grad(const NoveltyPolicy& policy, const NoveltyPolicy& ref,
                         const std::vector<PreferencePair>& batch, double beta,
                         NoveltyPolicy* grads);

// Mean over contexts of KL(pi_theta(.|ctx) || pi_ref(.|ctx)) across the full
// category vocabulary.
double kl_penalty_and_grad(const NoveltyPolicy& policy, const NoveltyPolicy& ref,
                           const std::vector<PolicyContext>& contexts, NoveltyPolicy* grads);

// dpo + alpha * kl over the batch (KL on each pair's context).
double total_loss_and_grad(const NoveltyPolicy& policy, const NoveltyPolicy& ref,
                           const std::vector<PreferencePair>& batch, double beta, double alpha,
                           NoveltyPolicy* grads);

// One full PCO cycle. `reward` may be retrained (cfg.retrain_reward) on the
// cycle's behavior pairs; `store` (optional) receives the refreshed aligned
// sets. The backend must observe `state.policy` and `reward` through the
// pointers it was constructed with.
CycleReport run_cycle(CycleState& state, const CycleInputs& inputs, LlmBackend& backend,
                      const PromptTemplates& templates, RewardModel& reward, Store* store,
                      const PcoConfig& cfg, Rng& rng);

std::string cycle_csv_header();
std::string cycle_csv_row(const CycleReport& report);

}  // namespace coea
