#pragma once

#include <map>
#include <set>

#include "coea/pco.hpp"
#include "coea/training.hpp"
#include "coea/types.hpp"

namespace coea {

// Desk-scale synthetic data: Gaussian cluster representations for the
// grouping analysis, a category-level world with ground-truth affinities for
// the PCO ablation, and a MovieLens-format dataset generator so the full
// pipeline runs without external downloads.

// Cluster centers are isotropic Gaussian draws scaled to `separation`;
// members add Gaussian noise of scale `noise`. User ids are "u<k>_<i>".
std::map<UserId, Vec> make_cluster_representations(size_t n_clusters, size_t per_cluster,
                                                   size_t d, double separation, double noise,
                                                   Rng& rng,
                                                   std::map<UserId, int>* labels = nullptr);

struct WorldConfig {
    size_t n_groups = 10;
    size_t n_categories = 60;
    size_t users_per_group = 20;
    size_t core_per_group = 8;    // high affinity, dominant long-phase exposure
    size_t latent_per_group = 6;  // high affinity, rarely exposed early
    size_t long_clicks = 40;
    size_t short_clicks = 12;
    uint64_t seed = 7;
};

struct WorldUser {
    UserId id;
    int group = 0;
    std::set<std::string> long_categories;  // long-phase click categories
    std::vector<std::string> short_seq;     // short-phase clicks, category per click
};

struct SyntheticWorld {
    WorldConfig config;
    Vocab categories;
    Matrix affinity;  // n_groups x n_categories, ground truth in [0,1]
    std::vector<std::vector<int>> core_ids;    // per group
    std::vector<std::vector<int>> latent_ids;  // per group
    std::vector<WorldUser> users;
    std::vector<std::string> group_profiles;  // canonical per-group text
};

SyntheticWorld make_world(const WorldConfig& cfg, Rng& rng);

// One PCO context per user: CSID {group}, the user's deduplicated short
// categories, and their full engagement history.
std::vector<PcoContext> world_contexts(const SyntheticWorld& world);

// SFT data per the construction in `training`: targets are short-phase
// clicks absent from the user's long-phase categories.
std::vector<SftExample> world_sft_examples(const SyntheticWorld& world);

// Fresh feedback for one cycle: per pair, a uniformly exposed slate of
// categories for a random user; c_pos drawn by affinity, c_neg by
// complementary affinity.
std::vector<PreferencePair> world_behavior_pairs(const SyntheticWorld& world, size_t n_pairs,
                                                 size_t slate_size, Rng& rng);

struct AblationConfig {
    WorldConfig world;
    PcoConfig pco;  // alpha is overridden per arm
    size_t rounds = 60;
    size_t sft_epochs = 150;
    size_t rm_bootstrap_pairs = 800;
    size_t rm_bootstrap_epochs = 80;
    size_t cycle_pairs = 200;
    size_t slate_size = 6;
    size_t reward_dim = 16;
};

struct AblationArm {
    double alpha = 0.0;
    uint64_t seed = 0;
    std::vector<CycleReport> rounds;
};

// Full Figure-6 style experiment: for each alpha and seed, bootstrap a
// fresh world + policy + reward model, then run `rounds` PCO cycles.
std::vector<AblationArm> run_ablation(const AblationConfig& cfg,
                                      const std::vector<double>& alphas,
                                      const std::vector<uint64_t>& seeds);

std::string ablation_csv(const std::vector<AblationArm>& arms);

struct MlSynthConfig {
    size_t n_users = 600;
    size_t n_items = 500;
    size_t n_groups = 8;  // latent taste groups behind the click process
    size_t min_events = 30;
    size_t max_events = 60;
    double repeat_prob = 0.55;  // chance an event revisits a favorite item
    uint64_t seed = 7;
};

// Writes ratings.dat / movies.dat / users.dat in MovieLens-1M format under
// `dir`. Repeat visits are frequent enough that click-count filtering at the
// default threshold keeps long sequences non-empty.
void write_movielens_dataset(const std::string& dir, const MlSynthConfig& cfg);

}  // namespace coea
