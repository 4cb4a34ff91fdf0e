#include "coea/pco.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "coea/errors.hpp"

namespace coea {

std::vector<PreferencePair> sample_subset(const std::vector<PreferencePair>& dataset, Rng& rng) {
    size_t n = dataset.size() / 100;  // floor(0.01 |D_k|)
    std::vector<PreferencePair> out;
    if (n == 0) return out;
    auto picks = rng.sample_without_replacement(dataset.size(), n);
    out.reserve(n);
    for (size_t i : picks) out.push_back(dataset[i]);
    return out;
}

namespace {

void check_compatible(const NoveltyPolicy& a, const NoveltyPolicy& b) {
    if (a.categories.size() != b.categories.size() || a.n_groups != b.n_groups ||
        a.w.rows() != b.w.rows() || a.w.cols() != b.w.cols())
        throw UsageError("policy and reference have different shapes");
}

double log_sigmoid(double x) {
    return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

std::vector<size_t> context_features(const NoveltyPolicy& p, const PolicyContext& ctx) {
    std::vector<size_t> idx;
    if (ctx.group >= 0) idx.push_back(static_cast<size_t>(ctx.group));
    for (int c : ctx.recent) {
        size_t f = p.n_groups + static_cast<size_t>(c);
        if (std::find(idx.begin(), idx.end(), f) == idx.end()) idx.push_back(f);
    }
    return idx;
}

}  // namespace

double dpo_loss_and_grad(const NoveltyPolicy& policy, const NoveltyPolicy& ref,
                         const std::vector<PreferencePair>& batch, double beta,
                         NoveltyPolicy* grads) {
    check_compatible(policy, ref);
    if (batch.empty()) throw DataError("dpo loss needs at least one pair");
    if (beta <= 0.0) throw UsageError("dpo beta must be positive");
    double inv_n = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (const auto& pr : batch) {
        // For softmax policies the log-sum-exp cancels inside the pairwise
        // log-ratio margin, leaving raw logit differences.
        Vec z = policy_logits(policy, pr.context);
        Vec zr = policy_logits(ref, pr.context);
        double g = beta * ((z[pr.c_pos] - z[pr.c_neg]) - (zr[pr.c_pos] - zr[pr.c_neg]));
        loss -= log_sigmoid(g) * inv_n;
        if (grads) {
            double dg = (1.0 / (1.0 + std::exp(-g)) - 1.0) * inv_n;  // sigma(g) - 1, scaled
            double dz = dg * beta;
            auto active = context_features(policy, pr.context);
            grads->b[pr.c_pos] += dz;
            grads->b[pr.c_neg] -= dz;
            for (size_t f : active) {
                grads->w(pr.c_pos, f) += dz;
                grads->w(pr.c_neg, f) -= dz;
            }
        }
    }
    return loss;
}

double kl_penalty_and_grad(const NoveltyPolicy& policy, const NoveltyPolicy& ref,
                           const std::vector<PolicyContext>& contexts, NoveltyPolicy* grads) {
    check_compatible(policy, ref);
    if (contexts.empty()) throw DataError("kl penalty needs at least one context");
    double inv_n = 1.0 / static_cast<double>(contexts.size());
    double total = 0.0;
    for (const auto& ctx : contexts) {
        Vec lp = policy_log_probs(policy, ctx);
        Vec lr = policy_log_probs(ref, ctx);
        double kl = 0.0;
        for (size_t c = 0; c < lp.size(); ++c) kl += std::exp(lp[c]) * (lp[c] - lr[c]);
        total += kl * inv_n;
        if (grads) {
            auto active = context_features(policy, ctx);
            for (size_t c = 0; c < lp.size(); ++c) {
                // dKL/dz_c = pi_c ((log pi_c - log ref_c) - KL)
                double dz = std::exp(lp[c]) * ((lp[c] - lr[c]) - kl) * inv_n;
                grads->b[c] += dz;
                for (size_t f : active) grads->w(c, f) += dz;
            }
        }
    }
    return total;
}

double total_loss_and_grad(const NoveltyPolicy& policy, const NoveltyPolicy& ref,
                           const std::vector<PreferencePair>& batch, double beta, double alpha,
                           NoveltyPolicy* grads) {
    double dpo = dpo_loss_and_grad(policy, ref, batch, beta, grads);
    std::vector<PolicyContext> contexts;
    contexts.reserve(batch.size());
    for (const auto& pr : batch) contexts.push_back(pr.context);
    NoveltyPolicy kl_grads = grads ? policy_zeros_like(policy) : NoveltyPolicy{};
    double kl = kl_penalty_and_grad(policy, ref, contexts, grads ? &kl_grads : nullptr);
    if (grads) {
        for (size_t i = 0; i < grads->w.size(); ++i)
            grads->w.data()[i] += alpha * kl_grads.w.data()[i];
        for (size_t i = 0; i < grads->b.size(); ++i) grads->b[i] += alpha * kl_grads.b[i];
    }
    return dpo + alpha * kl;
}

namespace {

struct ScoredContext {
    size_t context_index;
    std::vector<ScoredCategory> scored;  // normalized scores, candidate order
};

std::vector<ScoredContext> generate_and_score(const CycleState& state,
                                              const std::vector<PcoContext>& contexts,
                                              LlmBackend& backend,
                                              const PromptTemplates& templates,
                                              const PcoConfig& cfg, size_t* skipped) {
    std::vector<ScoredContext> out;
    for (size_t i = 0; i < contexts.size(); ++i) {
        const auto& ctx = contexts[i];
        PolicyContext pctx;
        pctx.group = ctx.group_feature;
        for (size_t j = ctx.short_categories.size() > 2 ? ctx.short_categories.size() - 2 : 0;
             j < ctx.short_categories.size(); ++j)
            pctx.recent.push_back(state.policy.categories.require(ctx.short_categories[j]));

        RenderedPrompt nov = templates.render(PromptRole::novelty_infer, ctx.profile_text,
                                              ctx.short_categories);
        CandidateQuery query;
        query.context = pctx;
        query.excluded = ctx.excluded_ids;
        query.m_cand = cfg.m_cand;
        CandidateSet cands = generate_candidates(backend, nov, query);
        if (cands.categories.empty()) {
            if (skipped) ++(*skipped);
            continue;
        }
        ScoredContext sc;
        sc.context_index = i;
        for (const auto& name : cands.categories) {
            int id = state.policy.categories.require(name);
            RenderedPrompt rel = templates.render(PromptRole::relevance_infer, ctx.profile_text,
                                                  ctx.short_categories, name);
            double raw = score_candidate(backend, rel, pctx, id);
            sc.scored.push_back({name, normalize_score(raw)});
        }
        out.push_back(std::move(sc));
    }
    return out;
}

}  // namespace

CycleReport run_cycle(CycleState& state, const CycleInputs& inputs, LlmBackend& backend,
                      const PromptTemplates& templates, RewardModel& reward, Store* store,
                      const PcoConfig& cfg, Rng& rng) {
    CycleReport report;
    report.cycle = state.cycle;
    state.ref = state.policy;  // freeze the reference for this cycle

    // Refresh the reward model on fresh click-derived pairs first, so this
    // cycle's scoring reflects the newest feedback.
    if (cfg.retrain_reward && !inputs.behavior_pairs.empty()) {
        RmTrainConfig rm_cfg;
        rm_cfg.epochs = cfg.rm_epochs;
        rm_cfg.adam = cfg.rm_adam;
        train_rm(reward, inputs.behavior_pairs, rm_cfg);
    }

    // Generate candidates per context and score them.
    auto scored = generate_and_score(state, inputs.contexts, backend, templates, cfg,
                                     &report.contexts_skipped);
    if (scored.empty() && !inputs.contexts.empty())
        throw DataError("cycle " + std::to_string(state.cycle) +
                        ": no candidates generated for any context");

    // Extreme-scored candidates per prompt become DPO pairs.
    std::vector<PreferencePair> fresh;
    for (const auto& sc : scored) {
        const auto& ctx = inputs.contexts[sc.context_index];
        size_t best = 0, worst = 0;
        for (size_t j = 1; j < sc.scored.size(); ++j) {
            if (sc.scored[j].score > sc.scored[best].score) best = j;
            if (sc.scored[j].score < sc.scored[worst].score) worst = j;
        }
        if (best == worst || sc.scored[best].score == sc.scored[worst].score) continue;
        PreferencePair pr;
        pr.context.group = ctx.group_feature;
        for (size_t j = ctx.short_categories.size() > 2 ? ctx.short_categories.size() - 2 : 0;
             j < ctx.short_categories.size(); ++j)
            pr.context.recent.push_back(
                state.policy.categories.require(ctx.short_categories[j]));
        pr.c_pos = state.policy.categories.require(sc.scored[best].category);
        pr.c_neg = state.policy.categories.require(sc.scored[worst].category);
        fresh.push_back(std::move(pr));
    }

    // Pool: fresh DPO pairs, fresh behavior pairs, and the 1% replay subset.
    std::vector<PreferencePair> replay = sample_subset(state.dataset, rng);
    report.pairs_fresh = fresh.size() + inputs.behavior_pairs.size();
    report.pairs_replay = replay.size();
    std::vector<PreferencePair> pool = fresh;
    pool.insert(pool.end(), inputs.behavior_pairs.begin(), inputs.behavior_pairs.end());
    pool.insert(pool.end(), replay.begin(), replay.end());

    if (pool.empty()) {
        report.fine_tune_skipped = true;
    } else {
        AdamState adam;
        auto pv = policy_param_views(state.policy);
        for (size_t step = 0; step < cfg.steps; ++step) {
            std::vector<PreferencePair> batch;
            if (pool.size() <= cfg.batch_size) {
                batch = pool;
            } else {
                auto picks = rng.sample_without_replacement(pool.size(), cfg.batch_size);
                for (size_t i : picks) batch.push_back(pool[i]);
            }
            NoveltyPolicy grads = policy_zeros_like(state.policy);
            report.dpo_trace.push_back(
                dpo_loss_and_grad(state.policy, state.ref, batch, cfg.beta, &grads));
            std::vector<PolicyContext> contexts;
            for (const auto& pr : batch) contexts.push_back(pr.context);
            NoveltyPolicy kl_grads = policy_zeros_like(state.policy);
            report.kl_trace.push_back(
                kl_penalty_and_grad(state.policy, state.ref, contexts, &kl_grads));
            for (size_t i = 0; i < grads.w.size(); ++i)
                grads.w.data()[i] += cfg.alpha * kl_grads.w.data()[i];
            for (size_t i = 0; i < grads.b.size(); ++i)
                grads.b[i] += cfg.alpha * kl_grads.b[i];
            adam.step(pv, policy_param_views(grads), cfg.adam);
        }
        if (cfg.steps == 0) {
            report.dpo_trace.push_back(
                dpo_loss_and_grad(state.policy, state.ref, pool, cfg.beta, nullptr));
            std::vector<PolicyContext> contexts;
            for (const auto& pr : pool) contexts.push_back(pr.context);
            report.kl_trace.push_back(
                kl_penalty_and_grad(state.policy, state.ref, contexts, nullptr));
        }
        report.dpo_loss = report.dpo_trace.back();
        report.kl_loss = report.kl_trace.back();
    }

    // Regenerate and rescore under the updated policy; write aligned sets.
    auto rescored = generate_and_score(state, inputs.contexts, backend, templates, cfg, nullptr);
    size_t novel = 0;
    double score_sum = 0.0;
    for (const auto& sc : rescored) {
        const auto& ctx = inputs.contexts[sc.context_index];
        auto aligned = select_aligned(sc.scored, cfg.tau_align);
        for (const auto& a : aligned) {
            score_sum += a.score;
            int id = state.policy.categories.require(a.category);
            if (std::find(ctx.history_ids.begin(), ctx.history_ids.end(), id) ==
                ctx.history_ids.end())
                ++novel;
        }
        report.aligned_total += aligned.size();
        if (store && !aligned.empty()) {
            StoreRecord rec;
            rec.key = make_key(ctx.csid, ctx.short_categories).str();
            rec.categories = aligned;
            rec.cycle = static_cast<int64_t>(state.cycle);
            store->put(rec);
        }
    }
    if (report.aligned_total > 0) {
        report.mean_relevance = score_sum / static_cast<double>(report.aligned_total);
        report.novelty_rate = static_cast<double>(novel) /
                              static_cast<double>(report.aligned_total);
    }

    // Accumulate D_k for future replay.
    state.dataset.insert(state.dataset.end(), fresh.begin(), fresh.end());
    state.dataset.insert(state.dataset.end(), inputs.behavior_pairs.begin(),
                         inputs.behavior_pairs.end());
    ++state.cycle;
    return report;
}

std::string cycle_csv_header() { return "cycle,mean_relevance,novelty_rate,dpo_loss,kl_loss"; }

std::string cycle_csv_row(const CycleReport& report) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%zu,%.9f,%.9f,%.9f,%.9f", report.cycle,
                  report.mean_relevance, report.novelty_rate, report.dpo_loss, report.kl_loss);
    return buf;
}

}  // namespace coea
