#include "coea/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>

#include "coea/checkpoint.hpp"
#include "coea/errors.hpp"

namespace coea {

namespace {

std::string padded(size_t value, size_t width) {
    std::string s = std::to_string(value);
    if (s.size() < width) s.insert(s.begin(), width - s.size(), '0');
    return s;
}

size_t digits(size_t n) {
    size_t w = 1;
    while (n >= 10) {
        n /= 10;
        ++w;
    }
    return w;
}

// Categorical draw proportional to `weights`; total mass must be positive.
size_t weighted_draw(const std::vector<double>& weights, Rng& rng) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw DataError("weighted draw over zero total mass");
    double u = rng.next_double() * total;
    double acc = 0.0;
    for (size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (u < acc) return i;
    }
    return weights.size() - 1;
}

std::vector<int> last_two_ids(const std::vector<std::string>& dedup_cats, const Vocab& vocab) {
    std::vector<int> recent;
    size_t n = dedup_cats.size();
    for (size_t i = (n > 2 ? n - 2 : 0); i < n; ++i) {
        recent.push_back(vocab.require(dedup_cats[i]));
    }
    return recent;
}

std::vector<std::string> dedup_first_occurrence(const std::vector<std::string>& seq) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& c : seq) {
        if (seen.insert(c).second) out.push_back(c);
    }
    return out;
}

}  // namespace

std::map<UserId, Vec> make_cluster_representations(size_t n_clusters, size_t per_cluster,
                                                   size_t d, double separation, double noise,
                                                   Rng& rng, std::map<UserId, int>* labels) {
    if (n_clusters == 0 || per_cluster == 0 || d == 0) {
        throw UsageError("cluster representation sizes must be positive");
    }
    std::map<UserId, Vec> reps;
    size_t kw = digits(n_clusters - 1);
    size_t iw = digits(per_cluster - 1);
    for (size_t k = 0; k < n_clusters; ++k) {
        Vec center(d);
        double norm2 = 0.0;
        for (size_t j = 0; j < d; ++j) {
            center[j] = rng.next_gaussian();
            norm2 += center[j] * center[j];
        }
        double scale = separation / std::sqrt(std::max(norm2, 1e-12));
        for (size_t j = 0; j < d; ++j) center[j] *= scale;
        for (size_t i = 0; i < per_cluster; ++i) {
            UserId id = "u" + padded(k, kw) + "_" + padded(i, iw);
            Vec v(d);
            for (size_t j = 0; j < d; ++j) v[j] = center[j] + noise * rng.next_gaussian();
            if (labels) (*labels)[id] = static_cast<int>(k);
            reps.emplace(std::move(id), std::move(v));
        }
    }
    return reps;
}

SyntheticWorld make_world(const WorldConfig& cfg, Rng& rng) {
    if (cfg.core_per_group + cfg.latent_per_group > cfg.n_categories) {
        throw UsageError("core and latent sets exceed the category vocabulary");
    }
    if (cfg.n_groups == 0 || cfg.users_per_group == 0) {
        throw UsageError("world needs at least one group and one user per group");
    }
    SyntheticWorld world;
    world.config = cfg;

    size_t cw = digits(cfg.n_categories - 1);
    std::vector<std::string> names;
    names.reserve(cfg.n_categories);
    for (size_t c = 0; c < cfg.n_categories; ++c) names.push_back("cat" + padded(c, cw));
    world.categories = Vocab(names);  // zero-padded names keep sorted order == index order

    world.affinity = Matrix(cfg.n_groups, cfg.n_categories);
    world.core_ids.resize(cfg.n_groups);
    world.latent_ids.resize(cfg.n_groups);
    for (size_t g = 0; g < cfg.n_groups; ++g) {
        for (size_t c = 0; c < cfg.n_categories; ++c) {
            world.affinity(g, c) = 0.15 * rng.next_double();
        }
        auto picks =
            rng.sample_without_replacement(cfg.n_categories, cfg.core_per_group + cfg.latent_per_group);
        for (size_t i = 0; i < picks.size(); ++i) {
            int c = static_cast<int>(picks[i]);
            if (i < cfg.core_per_group) {
                world.core_ids[g].push_back(c);
                world.affinity(g, c) = 0.7 + 0.3 * rng.next_double();
            } else {
                world.latent_ids[g].push_back(c);
                world.affinity(g, c) = 0.5 + 0.3 * rng.next_double();
            }
        }
        std::sort(world.core_ids[g].begin(), world.core_ids[g].end());
        std::sort(world.latent_ids[g].begin(), world.latent_ids[g].end());
    }

    // Canonical profile per group: its three highest-affinity core categories.
    for (size_t g = 0; g < cfg.n_groups; ++g) {
        std::vector<int> cores = world.core_ids[g];
        std::sort(cores.begin(), cores.end(), [&](int a, int b) {
            if (world.affinity(g, a) != world.affinity(g, b)) {
                return world.affinity(g, a) > world.affinity(g, b);
            }
            return a < b;
        });
        std::string text = "Group members share a stable long-term interest in ";
        size_t top = std::min<size_t>(3, cores.size());
        for (size_t i = 0; i < top; ++i) {
            if (i) text += ", ";
            text += world.categories.name(static_cast<size_t>(cores[i]));
        }
        text += ".";
        world.group_profiles.push_back(text);
    }

    // Two exposure regimes: the long phase almost never surfaces latent
    // categories, the short phase surfaces them as often as cores.
    size_t uw = digits(cfg.users_per_group - 1);
    size_t gw = digits(cfg.n_groups - 1);
    for (size_t g = 0; g < cfg.n_groups; ++g) {
        std::vector<double> w_long(cfg.n_categories), w_short(cfg.n_categories);
        std::vector<bool> is_core(cfg.n_categories, false), is_latent(cfg.n_categories, false);
        for (int c : world.core_ids[g]) is_core[static_cast<size_t>(c)] = true;
        for (int c : world.latent_ids[g]) is_latent[static_cast<size_t>(c)] = true;
        for (size_t c = 0; c < cfg.n_categories; ++c) {
            double expo_long = is_core[c] ? 1.0 : (is_latent[c] ? 0.05 : 0.2);
            double expo_short = is_core[c] ? 0.5 : (is_latent[c] ? 0.5 : 0.2);
            w_long[c] = expo_long * world.affinity(g, c);
            w_short[c] = expo_short * world.affinity(g, c);
        }
        for (size_t i = 0; i < cfg.users_per_group; ++i) {
            WorldUser u;
            u.id = "g" + padded(g, gw) + "u" + padded(i, uw);
            u.group = static_cast<int>(g);
            for (size_t t = 0; t < cfg.long_clicks; ++t) {
                u.long_categories.insert(world.categories.name(weighted_draw(w_long, rng)));
            }
            for (size_t t = 0; t < cfg.short_clicks; ++t) {
                u.short_seq.push_back(world.categories.name(weighted_draw(w_short, rng)));
            }
            world.users.push_back(std::move(u));
        }
    }
    return world;
}

std::vector<PcoContext> world_contexts(const SyntheticWorld& world) {
    std::vector<PcoContext> contexts;
    contexts.reserve(world.users.size());
    for (const auto& u : world.users) {
        PcoContext ctx;
        ctx.csid = {u.group};
        ctx.group_feature = u.group;
        ctx.profile_text = world.group_profiles[static_cast<size_t>(u.group)];
        ctx.short_categories = dedup_first_occurrence(u.short_seq);
        for (const auto& c : ctx.short_categories) {
            ctx.excluded_ids.push_back(world.categories.require(c));
        }
        std::set<int> history(ctx.excluded_ids.begin(), ctx.excluded_ids.end());
        for (const auto& c : u.long_categories) history.insert(world.categories.require(c));
        ctx.history_ids.assign(history.begin(), history.end());
        contexts.push_back(std::move(ctx));
    }
    return contexts;
}

std::vector<SftExample> world_sft_examples(const SyntheticWorld& world) {
    std::vector<SftExample> examples;
    for (const auto& u : world.users) {
        auto per_user =
            build_sft_examples(u.short_seq, u.long_categories, u.group, world.categories);
        examples.insert(examples.end(), per_user.begin(), per_user.end());
    }
    return examples;
}

std::vector<PreferencePair> world_behavior_pairs(const SyntheticWorld& world, size_t n_pairs,
                                                 size_t slate_size, Rng& rng) {
    if (slate_size < 2) throw UsageError("behavior slate needs at least two categories");
    size_t n_cat = world.categories.size();
    if (slate_size > n_cat) throw UsageError("behavior slate exceeds the category vocabulary");

    // Per-user recent feature, shared with the PCO contexts.
    std::vector<std::vector<int>> recents;
    recents.reserve(world.users.size());
    for (const auto& u : world.users) {
        recents.push_back(last_two_ids(dedup_first_occurrence(u.short_seq), world.categories));
    }

    std::vector<PreferencePair> pairs;
    pairs.reserve(n_pairs);
    for (size_t i = 0; i < n_pairs; ++i) {
        size_t ui = static_cast<size_t>(rng.bounded(world.users.size()));
        const auto& u = world.users[ui];
        auto slate = rng.sample_without_replacement(n_cat, slate_size);
        std::vector<double> w_pos(slate.size()), w_neg(slate.size());
        for (size_t s = 0; s < slate.size(); ++s) {
            double a = world.affinity(static_cast<size_t>(u.group), slate[s]);
            w_pos[s] = a;
            w_neg[s] = 1.0 - a;
        }
        size_t pos_slot = weighted_draw(w_pos, rng);
        w_neg[pos_slot] = 0.0;
        double rest = 0.0;
        for (double w : w_neg) rest += w;
        // A slate of near-certain clicks leaves no credible negative; resample.
        if (!(rest > 0.0)) {
            --i;
            continue;
        }
        size_t neg_slot = weighted_draw(w_neg, rng);
        PreferencePair pair;
        pair.context.group = u.group;
        pair.context.recent = recents[ui];
        pair.c_pos = static_cast<int>(slate[pos_slot]);
        pair.c_neg = static_cast<int>(slate[neg_slot]);
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

std::vector<AblationArm> run_ablation(const AblationConfig& cfg,
                                      const std::vector<double>& alphas,
                                      const std::vector<uint64_t>& seeds) {
    if (alphas.empty() || seeds.empty()) throw UsageError("ablation needs alphas and seeds");
    std::vector<AblationArm> arms;
    PromptTemplates templates = PromptTemplates::builtin();
    for (double alpha : alphas) {
        for (uint64_t seed : seeds) {
            Rng rng(seed);
            SyntheticWorld world = make_world(cfg.world, rng);

            NoveltyPolicy policy = init_policy(cfg.world.n_groups, world.categories);
            SftTrainConfig sft_cfg;
            sft_cfg.epochs = cfg.sft_epochs;
            sft_cfg.adam.lr = 0.05;
            train_sft(policy, world_sft_examples(world), sft_cfg);

            RewardModel reward =
                init_reward(cfg.world.n_groups, world.categories, cfg.reward_dim, rng);
            RmTrainConfig rm_cfg;
            rm_cfg.epochs = cfg.rm_bootstrap_epochs;
            rm_cfg.adam.lr = 0.05;
            train_rm(reward,
                     world_behavior_pairs(world, cfg.rm_bootstrap_pairs, cfg.slate_size, rng),
                     rm_cfg);

            CycleState state;
            state.policy = policy;
            state.ref = policy;
            state.alpha = alpha;
            state.beta = cfg.pco.beta;
            SimulatedBackend backend(&state.policy, &reward, rng.next_u64());

            PcoConfig pco_cfg = cfg.pco;
            pco_cfg.alpha = alpha;

            AblationArm arm;
            arm.alpha = alpha;
            arm.seed = seed;
            std::vector<PcoContext> contexts = world_contexts(world);
            for (size_t r = 0; r < cfg.rounds; ++r) {
                CycleInputs inputs;
                inputs.contexts = contexts;
                inputs.behavior_pairs =
                    world_behavior_pairs(world, cfg.cycle_pairs, cfg.slate_size, rng);
                arm.rounds.push_back(run_cycle(state, inputs, backend, templates, reward,
                                               nullptr, pco_cfg, rng));
            }
            arms.push_back(std::move(arm));
        }
    }
    return arms;
}

std::string ablation_csv(const std::vector<AblationArm>& arms) {
    std::string out = "alpha,seed,cycle,mean_relevance,novelty_rate,dpo_loss,kl_loss,aligned_total\n";
    char buf[256];
    for (const auto& arm : arms) {
        for (const auto& r : arm.rounds) {
            std::snprintf(buf, sizeof(buf), "%.9f,%llu,%zu,%.9f,%.9f,%.9f,%.9f,%zu\n", arm.alpha,
                          static_cast<unsigned long long>(arm.seed), r.cycle, r.mean_relevance,
                          r.novelty_rate, r.dpo_loss, r.kl_loss, r.aligned_total);
            out += buf;
        }
    }
    return out;
}

void write_movielens_dataset(const std::string& dir, const MlSynthConfig& cfg) {
    if (cfg.n_users == 0 || cfg.n_items == 0 || cfg.n_groups == 0) {
        throw UsageError("dataset sizes must be positive");
    }
    if (cfg.min_events < 3 || cfg.max_events < cfg.min_events) {
        throw UsageError("event counts must satisfy 3 <= min <= max");
    }
    Rng rng(cfg.seed);

    static const char* kGenres[] = {"Action",      "Adventure", "Animation", "Children's",
                                    "Comedy",      "Crime",     "Documentary", "Drama",
                                    "Fantasy",     "Film-Noir", "Horror",    "Musical",
                                    "Mystery",     "Romance",   "Sci-Fi",    "Thriller",
                                    "War",         "Western"};
    constexpr size_t kNumGenres = sizeof(kGenres) / sizeof(kGenres[0]);

    // Zipf-weighted genre popularity gives the catalog a head and a tail.
    std::vector<double> genre_weight(kNumGenres);
    for (size_t g = 0; g < kNumGenres; ++g) genre_weight[g] = 1.0 / static_cast<double>(g + 1);

    std::vector<size_t> item_genre(cfg.n_items);
    std::vector<std::vector<size_t>> genre_items(kNumGenres);
    std::string movies;
    char buf[512];
    for (size_t i = 0; i < cfg.n_items; ++i) {
        size_t g = weighted_draw(genre_weight, rng);
        item_genre[i] = g;
        genre_items[g].push_back(i + 1);
        int year = 1930 + static_cast<int>(rng.bounded(70));
        std::string genres = kGenres[g];
        if (rng.next_double() < 0.3) {
            size_t extra = rng.bounded(kNumGenres);
            if (extra != g) genres += std::string("|") + kGenres[extra];
        }
        std::snprintf(buf, sizeof(buf), "%zu::Synthetic Feature %04zu (%d)::%s\n", i + 1, i + 1,
                      year, genres.c_str());
        movies += buf;
    }
    // Guarantee every genre can be sampled; the alias item keeps its own
    // catalog genre, this only redirects clicks.
    for (size_t g = 0; g < kNumGenres; ++g) {
        if (genre_items[g].empty()) genre_items[g].push_back(1 + rng.bounded(cfg.n_items));
    }

    // Spiky per-group genre preferences.
    std::vector<std::vector<double>> group_pref(cfg.n_groups, std::vector<double>(kNumGenres));
    for (size_t g = 0; g < cfg.n_groups; ++g) {
        for (size_t c = 0; c < kNumGenres; ++c) {
            group_pref[g][c] = std::exp(1.5 * rng.next_gaussian()) * genre_weight[c];
        }
    }

    static const int kAgeCodes[] = {1, 18, 25, 35, 45, 50, 56};
    std::string users;
    std::string ratings;
    for (size_t u = 1; u <= cfg.n_users; ++u) {
        size_t group = rng.bounded(cfg.n_groups);
        char gender = rng.bounded(2) == 0 ? 'F' : 'M';
        int age = kAgeCodes[rng.bounded(7)];
        int occupation = static_cast<int>(rng.bounded(21));
        std::snprintf(buf, sizeof(buf), "%zu::%c::%d::%d::%05d\n", u, gender, age, occupation,
                      static_cast<int>(rng.bounded(100000)));
        users += buf;

        size_t n_events = cfg.min_events + rng.bounded(cfg.max_events - cfg.min_events + 1);
        int64_t ts = 978300000 + static_cast<int64_t>(u) * 37;
        std::vector<size_t> favorites;
        for (size_t t = 0; t < n_events; ++t) {
            size_t item;
            if (!favorites.empty() && rng.next_double() < cfg.repeat_prob) {
                item = favorites[rng.bounded(favorites.size())];
            } else {
                size_t genre = weighted_draw(group_pref[group], rng);
                const auto& pool = genre_items[genre];
                item = pool[rng.bounded(pool.size())];
                favorites.push_back(item);
                if (favorites.size() > 12) favorites.erase(favorites.begin());
            }
            int rating = 1 + static_cast<int>(rng.bounded(5));
            ts += 60 + static_cast<int64_t>(rng.bounded(21600));
            std::snprintf(buf, sizeof(buf), "%zu::%zu::%d::%lld\n", u, item, rating,
                          static_cast<long long>(ts));
            ratings += buf;
        }
    }

    std::filesystem::create_directories(dir);
    write_text_file(dir + "/movies.dat", movies);
    write_text_file(dir + "/users.dat", users);
    write_text_file(dir + "/ratings.dat", ratings);
}

}  // namespace coea
