#pragma once

#include <cstdint>
#include <string>

namespace coea {

// Full run configuration, one section per module. Defaults follow the paper
// protocol (tau=5, d=128, L=4, h=4, S_cb=16, K_q=4, k=8, M_N=50, beta=0.1,
// tau_align=0.5, alpha=0.4); everything else is the desk-scale default.
struct RunConfig {
    struct Data {
        size_t tau = 5;       // minimum long-window click count per kept item
        size_t k_short = 10;  // short-term window length K
        std::string format = "movielens_1m";  // or "tsv"
        std::string mode = "strict";          // or "skip"
        bool operator==(const Data&) const = default;
    } data;

    struct Encoder {
        size_t d = 128;
        size_t layers = 4;
        size_t heads = 4;
        size_t t_max = 50;
        size_t steps = 50;
        double lr = 0.1;
        double momentum = 0.9;
        bool operator==(const Encoder&) const = default;
    } encoder;

    struct Quantizer {
        size_t d_h = 64;
        size_t d_z = 32;
        size_t levels = 4;         // K_q
        size_t codebook_size = 16;  // S_cb
        double beta_c = 0.25;
        size_t epochs = 200;
        double lr = 0.01;
        bool operator==(const Quantizer&) const = default;
    } quantizer;

    struct Grouping {
        size_t representatives = 8;  // k
        bool operator==(const Grouping&) const = default;
    } grouping;

    struct Gateway {
        std::string backend = "simulated";  // or "http"
        std::string endpoint;
        std::string model;
        std::string api_key_env = "COEA_API_KEY";
        size_t timeout_ms = 30000;
        size_t retries = 3;
        size_t backoff_ms = 500;
        std::string template_dir;  // empty keeps the builtin templates
        bool operator==(const Gateway&) const = default;
    } gateway;

    struct Training {
        size_t top_p = 10;  // exposure surrogate size
        size_t sft_epochs = 100;
        double sft_lr = 0.01;
        size_t rm_epochs = 100;
        double rm_lr = 0.01;
        size_t reward_dim = 16;
        bool operator==(const Training&) const = default;
    } training;

    struct Pco {
        double alpha = 0.4;
        double beta = 0.1;
        double tau_align = 0.5;
        size_t cycles = 3;
        size_t steps = 5;
        size_t batch_size = 64;
        double lr = 0.05;
        size_t m_n = 50;  // novel-candidate target per context per cycle
        bool retrain_reward = true;
        size_t rm_epochs = 1;
        bool operator==(const Pco&) const = default;
    } pco;

    struct Eval {
        size_t k = 5;
        size_t n_groups_sampled = 10;
        size_t subset_size = 30;
        bool operator==(const Eval&) const = default;
    } eval;

    struct Run {
        uint64_t seed = 7;
        bool operator==(const Run&) const = default;
    } run;

    bool operator==(const RunConfig&) const = default;
};

// INI text with [section] headers and key = value lines; '#' and ';' start
// comments. Unknown sections or keys raise UsageError; values are parsed by
// the key's declared type.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// Canonical serialization: fixed section and key order, full precision.
// parse_config(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& cfg);

// Cross-field validation (UsageError naming the offending key).
void validate_config(const RunConfig& cfg);

std::string config_digest(const RunConfig& cfg);

}  // namespace coea
