#include "coea/training.hpp"

#include <algorithm>
#include <cmath>

#include "coea/errors.hpp"

namespace coea {

namespace {

// Active feature indices for a context: the group one-hot plus an indicator
// per distinct recent category.
std::vector<size_t> active_features(size_t n_groups, const PolicyContext& ctx) {
    std::vector<size_t> idx;
    if (ctx.group >= 0) {
        if (static_cast<size_t>(ctx.group) >= n_groups)
            throw DataError("group feature out of range: " + std::to_string(ctx.group));
        idx.push_back(static_cast<size_t>(ctx.group));
    }
    for (int c : ctx.recent) {
        size_t f = n_groups + static_cast<size_t>(c);
        if (std::find(idx.begin(), idx.end(), f) == idx.end()) idx.push_back(f);
    }
    return idx;
}

double log_sigmoid(double x) {
    // -softplus(-x), stable on both tails
    return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

}  // namespace

std::vector<ParamView> policy_param_views(NoveltyPolicy& p) {
    return {{"w", p.w.data(), p.w.size()}, {"b", p.b.data(), p.b.size()}};
}

NoveltyPolicy init_policy(size_t n_groups, const Vocab& categories) {
    if (categories.size() < 2) throw UsageError("policy needs at least two categories");
    NoveltyPolicy p;
    p.n_groups = n_groups;
    p.categories = categories;
    p.w = Matrix(categories.size(), n_groups + categories.size());
    p.b.assign(categories.size(), 0.0);
    return p;
}

NoveltyPolicy policy_zeros_like(const NoveltyPolicy& like) {
    NoveltyPolicy z = like;
    z.w.fill(0.0);
    std::fill(z.b.begin(), z.b.end(), 0.0);
    return z;
}

Vec policy_logits(const NoveltyPolicy& p, const PolicyContext& ctx) {
    auto active = active_features(p.n_groups, ctx);
    size_t n = p.categories.size();
    Vec z = p.b;
    for (size_t c = 0; c < n; ++c)
        for (size_t f : active) z[c] += p.w(c, f);
    return z;
}

Vec policy_log_probs(const NoveltyPolicy& p, const PolicyContext& ctx) {
    Vec z = policy_logits(p, ctx);
    double mx = *std::max_element(z.begin(), z.end());
    double lse = 0.0;
    for (double v : z) lse += std::exp(v - mx);
    lse = mx + std::log(lse);
    for (double& v : z) v -= lse;
    return z;
}

Vec policy_probs(const NoveltyPolicy& p, const PolicyContext& ctx) {
    Vec lp = policy_log_probs(p, ctx);
    for (double& v : lp) v = std::exp(v);
    return lp;
}

std::vector<int> policy_sample_without_replacement(const NoveltyPolicy& p,
                                                   const PolicyContext& ctx,
                                                   const std::vector<int>& allowed, size_t count,
                                                   Rng& rng) {
    if (allowed.empty()) throw DataError("policy sampling from an empty allowed set");
    Vec probs = policy_probs(p, ctx);
    std::vector<int> pool = allowed;
    std::vector<int> out;
    size_t n = std::min(count, pool.size());
    out.reserve(n);
    while (out.size() < n) {
        double total = 0.0;
        for (int c : pool) total += probs[c];
        double u = rng.next_double() * total;
        size_t pick = pool.size() - 1;  // numeric-slack fallback: last entry
        double acc = 0.0;
        for (size_t i = 0; i < pool.size(); ++i) {
            acc += probs[pool[i]];
            if (u < acc) {
                pick = i;
                break;
            }
        }
        out.push_back(pool[pick]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    return out;
}

std::vector<SftExample> build_sft_examples(const std::vector<std::string>& short_cat_seq,
                                           const std::set<std::string>& long_term_categories,
                                           int group_feature, const Vocab& categories) {
    std::vector<SftExample> out;
    for (size_t t = 2; t < short_cat_seq.size(); ++t) {
        if (long_term_categories.count(short_cat_seq[t])) continue;
        SftExample ex;
        ex.context.group = group_feature;
        ex.context.recent = {categories.require(short_cat_seq[t - 2]),
                             categories.require(short_cat_seq[t - 1])};
        ex.target = categories.require(short_cat_seq[t]);
        out.push_back(std::move(ex));
    }
    return out;
}

double sft_loss_and_grad(const NoveltyPolicy& p, const std::vector<SftExample>& examples,
                         NoveltyPolicy* grads) {
    if (examples.empty()) throw DataError("sft loss needs at least one example");
    double inv_n = 1.0 / static_cast<double>(examples.size());
    double loss = 0.0;
    for (const auto& ex : examples) {
        Vec lp = policy_log_probs(p, ex.context);
        loss -= lp[ex.target] * inv_n;
        if (grads) {
            auto active = active_features(p.n_groups, ex.context);
            for (size_t c = 0; c < lp.size(); ++c) {
                double dz = std::exp(lp[c]) * inv_n;
                if (static_cast<int>(c) == ex.target) dz -= inv_n;
                grads->b[c] += dz;
                for (size_t f : active) grads->w(c, f) += dz;
            }
        }
    }
    return loss;
}

std::vector<double> train_sft(NoveltyPolicy& p, const std::vector<SftExample>& examples,
                              const SftTrainConfig& cfg) {
    std::vector<double> trace;
    AdamState adam;
    auto pv = policy_param_views(p);
    for (size_t e = 0; e < cfg.epochs; ++e) {
        NoveltyPolicy grads = policy_zeros_like(p);
        trace.push_back(sft_loss_and_grad(p, examples, &grads));
        adam.step(pv, policy_param_views(grads), cfg.adam);
    }
    trace.push_back(sft_loss_and_grad(p, examples, nullptr));
    return trace;
}

std::vector<ParamView> reward_param_views(RewardModel& m) {
    return {{"ctx_w", m.ctx_w.data(), m.ctx_w.size()},
            {"emb", m.emb.data(), m.emb.size()},
            {"bil", m.bil.data(), m.bil.size()}};
}

RewardModel init_reward(size_t n_groups, const Vocab& categories, size_t d_r, Rng& rng,
                        double init_scale) {
    if (categories.size() < 2) throw UsageError("reward model needs at least two categories");
    RewardModel m;
    m.n_groups = n_groups;
    m.categories = categories;
    m.d_r = d_r;
    size_t f = n_groups + categories.size();
    m.ctx_w.assign(f, 0.0);
    m.emb = Matrix(categories.size(), d_r);
    m.bil = Matrix(d_r, f);
    for (double& v : m.emb.raw()) v = rng.next_gaussian() * init_scale;
    for (double& v : m.bil.raw()) v = rng.next_gaussian() * init_scale;
    return m;
}

RewardModel reward_zeros_like(const RewardModel& like) {
    RewardModel z = like;
    std::fill(z.ctx_w.begin(), z.ctx_w.end(), 0.0);
    z.emb.fill(0.0);
    z.bil.fill(0.0);
    return z;
}

double reward_score(const RewardModel& m, const PolicyContext& ctx, int category) {
    if (category < 0 || static_cast<size_t>(category) >= m.categories.size())
        throw DataError("reward_score: category id out of range");
    auto active = active_features(m.n_groups, ctx);
    double r = 0.0;
    for (size_t f : active) {
        r += m.ctx_w[f];
        // e_c . B phi accumulated column-wise over active features
        for (size_t j = 0; j < m.d_r; ++j) r += m.emb(category, j) * m.bil(j, f);
    }
    if (!std::isfinite(r)) throw DataError("reward score is not finite");
    return r;
}

double rm_loss_and_grad(const RewardModel& m, const std::vector<PreferencePair>& pairs,
                        RewardModel* grads) {
    if (pairs.empty()) throw DataError("rm loss needs at least one pair");
    double inv_n = 1.0 / static_cast<double>(pairs.size());
    double loss = 0.0;
    for (const auto& pr : pairs) {
        double delta = reward_score(m, pr.context, pr.c_pos) -
                       reward_score(m, pr.context, pr.c_neg);
        loss -= log_sigmoid(delta) * inv_n;
        if (grads) {
            double dd = (1.0 / (1.0 + std::exp(-delta)) - 1.0) * inv_n;  // d loss / d delta
            // ctx_w contributes identically to both scores, so its pairwise
            // gradient is exactly zero and is not accumulated.
            auto active = active_features(m.n_groups, pr.context);
            for (size_t f : active) {
                for (size_t j = 0; j < m.d_r; ++j) {
                    grads->emb(pr.c_pos, j) += dd * m.bil(j, f);
                    grads->emb(pr.c_neg, j) -= dd * m.bil(j, f);
                    grads->bil(j, f) += dd * (m.emb(pr.c_pos, j) - m.emb(pr.c_neg, j));
                }
            }
        }
    }
    return loss;
}

std::vector<double> train_rm(RewardModel& m, const std::vector<PreferencePair>& pairs,
                             const RmTrainConfig& cfg) {
    std::vector<double> trace;
    AdamState adam;
    auto pv = reward_param_views(m);
    for (size_t e = 0; e < cfg.epochs; ++e) {
        RewardModel grads = reward_zeros_like(m);
        trace.push_back(rm_loss_and_grad(m, pairs, &grads));
        adam.step(pv, reward_param_views(grads), cfg.adam);
    }
    trace.push_back(rm_loss_and_grad(m, pairs, nullptr));
    return trace;
}

double normalize_score(double raw) {
    if (!std::isfinite(raw)) throw DataError("normalize_score: non-finite input");
    double s = raw >= 0.0 ? 1.0 / (1.0 + std::exp(-raw))
                          : std::exp(raw) / (1.0 + std::exp(raw));
    // The contract is the open interval (0,1); saturated tails are nudged to
    // the nearest interior double so store-side range validation holds.
    if (s >= 1.0) s = std::nextafter(1.0, 0.0);
    if (s <= 0.0) s = std::nextafter(0.0, 1.0);
    return s;
}

std::vector<ScoredCategory> select_aligned(const std::vector<ScoredCategory>& scored,
                                           double tau_align) {
    std::vector<ScoredCategory> out;
    for (const auto& sc : scored)
        if (sc.score > tau_align) out.push_back(sc);
    return out;
}

std::vector<PreferencePair> build_preference_pairs(
    const std::map<UserId, std::vector<std::string>>& user_category_seqs,
    const std::map<UserId, int>& user_group_feature, const Vocab& categories, size_t top_p,
    Rng& rng, PairBuildReport* report) {
    // Exposure surrogate: the top_p most-clicked categories in the window,
    // count ties broken by name.
    std::map<std::string, size_t> volume;
    for (const auto& [user, seq] : user_category_seqs)
        for (const auto& cat : seq) ++volume[cat];
    std::vector<std::pair<std::string, size_t>> ranked(volume.begin(), volume.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<int> surrogate;
    for (size_t i = 0; i < ranked.size() && i < top_p; ++i)
        surrogate.push_back(categories.require(ranked[i].first));

    std::vector<PreferencePair> out;
    for (const auto& [user, seq] : user_category_seqs) {
        std::set<int> clicked;
        for (const auto& cat : seq) clicked.insert(categories.require(cat));
        std::vector<int> negatives;
        for (int c : surrogate)
            if (!clicked.count(c)) negatives.push_back(c);
        int group = -1;
        if (auto it = user_group_feature.find(user); it != user_group_feature.end())
            group = it->second;
        for (size_t t = 2; t < seq.size(); ++t) {
            if (negatives.empty()) {
                if (report) ++report->skipped;
                continue;
            }
            PreferencePair pr;
            pr.context.group = group;
            pr.context.recent = {categories.require(seq[t - 2]),
                                 categories.require(seq[t - 1])};
            pr.c_pos = categories.require(seq[t]);
            pr.c_neg = negatives[rng.bounded(negatives.size())];
            out.push_back(std::move(pr));
            if (report) ++report->pairs;
        }
    }
    return out;
}

}  // namespace coea
