#include "coea/config.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <vector>

#include "coea/checkpoint.hpp"
#include "coea/errors.hpp"
#include "coea/rng.hpp"

namespace coea {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

size_t parse_size(const std::string& v) {
    size_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw UsageError("not a count: " + v);
    return out;
}

uint64_t parse_u64(const std::string& v) {
    uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw UsageError("not an integer: " + v);
    return out;
}

double parse_double(const std::string& v) {
    if (v.empty()) throw UsageError("not a number: empty value");
    char* end = nullptr;
    double out = std::strtod(v.c_str(), &end);
    if (end != v.c_str() + v.size()) throw UsageError("not a number: " + v);
    return out;
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw UsageError("not a boolean: " + v);
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct Field {
    std::string section;
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define SIZE_FIELD(sec, name, member)                                            \
    Field{sec, name, [](RunConfig& c, const std::string& v) { c.member = parse_size(v); }, \
          [](const RunConfig& c) { return std::to_string(c.member); }}
#define DOUBLE_FIELD(sec, name, member)                                          \
    Field{sec, name, [](RunConfig& c, const std::string& v) { c.member = parse_double(v); }, \
          [](const RunConfig& c) { return format_double(c.member); }}
#define BOOL_FIELD(sec, name, member)                                            \
    Field{sec, name, [](RunConfig& c, const std::string& v) { c.member = parse_bool(v); }, \
          [](const RunConfig& c) { return c.member ? std::string("true") : std::string("false"); }}
#define STRING_FIELD(sec, name, member)                                          \
    Field{sec, name, [](RunConfig& c, const std::string& v) { c.member = v; },   \
          [](const RunConfig& c) { return c.member; }}
#define U64_FIELD(sec, name, member)                                             \
    Field{sec, name, [](RunConfig& c, const std::string& v) { c.member = parse_u64(v); }, \
          [](const RunConfig& c) { return std::to_string(c.member); }}

const std::vector<Field>& registry() {
    static const std::vector<Field> fields = {
        SIZE_FIELD("data", "tau", data.tau),
        SIZE_FIELD("data", "k_short", data.k_short),
        STRING_FIELD("data", "format", data.format),
        STRING_FIELD("data", "mode", data.mode),
        SIZE_FIELD("encoder", "d", encoder.d),
        SIZE_FIELD("encoder", "layers", encoder.layers),
        SIZE_FIELD("encoder", "heads", encoder.heads),
        SIZE_FIELD("encoder", "t_max", encoder.t_max),
        SIZE_FIELD("encoder", "steps", encoder.steps),
        DOUBLE_FIELD("encoder", "lr", encoder.lr),
        DOUBLE_FIELD("encoder", "momentum", encoder.momentum),
        SIZE_FIELD("quantizer", "d_h", quantizer.d_h),
        SIZE_FIELD("quantizer", "d_z", quantizer.d_z),
        SIZE_FIELD("quantizer", "levels", quantizer.levels),
        SIZE_FIELD("quantizer", "codebook_size", quantizer.codebook_size),
        DOUBLE_FIELD("quantizer", "beta_c", quantizer.beta_c),
        SIZE_FIELD("quantizer", "epochs", quantizer.epochs),
        DOUBLE_FIELD("quantizer", "lr", quantizer.lr),
        SIZE_FIELD("grouping", "representatives", grouping.representatives),
        STRING_FIELD("gateway", "backend", gateway.backend),
        STRING_FIELD("gateway", "endpoint", gateway.endpoint),
        STRING_FIELD("gateway", "model", gateway.model),
        STRING_FIELD("gateway", "api_key_env", gateway.api_key_env),
        SIZE_FIELD("gateway", "timeout_ms", gateway.timeout_ms),
        SIZE_FIELD("gateway", "retries", gateway.retries),
        SIZE_FIELD("gateway", "backoff_ms", gateway.backoff_ms),
        STRING_FIELD("gateway", "template_dir", gateway.template_dir),
        SIZE_FIELD("training", "top_p", training.top_p),
        SIZE_FIELD("training", "sft_epochs", training.sft_epochs),
        DOUBLE_FIELD("training", "sft_lr", training.sft_lr),
        SIZE_FIELD("training", "rm_epochs", training.rm_epochs),
        DOUBLE_FIELD("training", "rm_lr", training.rm_lr),
        SIZE_FIELD("training", "reward_dim", training.reward_dim),
        DOUBLE_FIELD("pco", "alpha", pco.alpha),
        DOUBLE_FIELD("pco", "beta", pco.beta),
        DOUBLE_FIELD("pco", "tau_align", pco.tau_align),
        SIZE_FIELD("pco", "cycles", pco.cycles),
        SIZE_FIELD("pco", "steps", pco.steps),
        SIZE_FIELD("pco", "batch_size", pco.batch_size),
        DOUBLE_FIELD("pco", "lr", pco.lr),
        SIZE_FIELD("pco", "m_n", pco.m_n),
        BOOL_FIELD("pco", "retrain_reward", pco.retrain_reward),
        SIZE_FIELD("pco", "rm_epochs", pco.rm_epochs),
        SIZE_FIELD("eval", "k", eval.k),
        SIZE_FIELD("eval", "n_groups_sampled", eval.n_groups_sampled),
        SIZE_FIELD("eval", "subset_size", eval.subset_size),
        U64_FIELD("run", "seed", run.seed),
    };
    return fields;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD
#undef BOOL_FIELD
#undef STRING_FIELD
#undef U64_FIELD

const Field* find_field(const std::string& section, const std::string& key) {
    for (const auto& f : registry()) {
        if (f.section == section && f.key == key) return &f;
    }
    return nullptr;
}

bool known_section(const std::string& section) {
    for (const auto& f : registry()) {
        if (f.section == section) return true;
    }
    return false;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::string section;
    size_t line_no = 0;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t nl = text.find('\n', pos);
        std::string line = trim(text.substr(pos, nl == std::string::npos ? nl : nl - pos));
        pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw UsageError("line " + std::to_string(line_no) + ": unterminated section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            if (!known_section(section)) {
                throw UsageError("line " + std::to_string(line_no) + ": unknown config section: " +
                                 section);
            }
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw UsageError("line " + std::to_string(line_no) + ": expected key = value");
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (section.empty()) {
            throw UsageError("line " + std::to_string(line_no) + ": key outside any section: " +
                             key);
        }
        const Field* field = find_field(section, key);
        if (!field) {
            throw UsageError("line " + std::to_string(line_no) + ": unknown config key: " +
                             section + "." + key);
        }
        try {
            field->set(cfg, value);
        } catch (const UsageError& e) {
            throw UsageError(section + "." + key + ": " + e.what());
        }
    }
    return cfg;
}

RunConfig load_config(const std::string& path) { return parse_config(read_text_file(path)); }

std::string serialize_config(const RunConfig& cfg) {
    std::string out;
    std::string section;
    for (const auto& f : registry()) {
        if (f.section != section) {
            if (!section.empty()) out += "\n";
            section = f.section;
            out += "[" + section + "]\n";
        }
        out += f.key + " = " + f.get(cfg) + "\n";
    }
    return out;
}

void validate_config(const RunConfig& cfg) {
    auto require = [](bool ok, const std::string& key, const std::string& why) {
        if (!ok) throw UsageError("config " + key + ": " + why);
    };
    require(cfg.data.tau >= 1, "data.tau", "must be at least 1");
    require(cfg.data.k_short >= 1, "data.k_short", "must be at least 1");
    require(cfg.data.format == "movielens_1m" || cfg.data.format == "tsv", "data.format",
            "must be movielens_1m or tsv");
    require(cfg.data.mode == "strict" || cfg.data.mode == "skip", "data.mode",
            "must be strict or skip");
    require(cfg.encoder.d >= 1, "encoder.d", "must be at least 1");
    require(cfg.encoder.heads >= 1, "encoder.heads", "must be at least 1");
    require(cfg.encoder.d % cfg.encoder.heads == 0, "encoder.heads", "must divide encoder.d");
    require(cfg.encoder.layers >= 1, "encoder.layers", "must be at least 1");
    require(cfg.encoder.t_max >= 1, "encoder.t_max", "must be at least 1");
    require(cfg.quantizer.d_h >= 1, "quantizer.d_h", "must be at least 1");
    require(cfg.quantizer.d_z >= 1, "quantizer.d_z", "must be at least 1");
    require(cfg.quantizer.levels >= 1, "quantizer.levels", "must be at least 1");
    require(cfg.quantizer.codebook_size >= 2, "quantizer.codebook_size", "must be at least 2");
    require(cfg.quantizer.beta_c >= 0.0, "quantizer.beta_c", "must be non-negative");
    require(cfg.grouping.representatives >= 1, "grouping.representatives", "must be at least 1");
    require(cfg.gateway.backend == "simulated" || cfg.gateway.backend == "http",
            "gateway.backend", "must be simulated or http");
    if (cfg.gateway.backend == "http") {
        require(!cfg.gateway.endpoint.empty(), "gateway.endpoint",
                "required for the http backend");
    }
    require(cfg.gateway.timeout_ms >= 1, "gateway.timeout_ms", "must be at least 1");
    require(cfg.training.top_p >= 1, "training.top_p", "must be at least 1");
    require(cfg.training.reward_dim >= 1, "training.reward_dim", "must be at least 1");
    require(cfg.pco.alpha >= 0.0, "pco.alpha", "must be non-negative");
    require(cfg.pco.beta > 0.0, "pco.beta", "must be positive");
    require(cfg.pco.tau_align > 0.0 && cfg.pco.tau_align < 1.0, "pco.tau_align",
            "must lie in (0, 1)");
    require(cfg.pco.cycles >= 1, "pco.cycles", "must be at least 1");
    require(cfg.pco.batch_size >= 1, "pco.batch_size", "must be at least 1");
    require(cfg.pco.m_n >= 1, "pco.m_n", "must be at least 1");
    require(cfg.eval.k >= 1, "eval.k", "must be at least 1");
    require(cfg.eval.n_groups_sampled >= 1, "eval.n_groups_sampled", "must be at least 1");
    require(cfg.eval.subset_size >= 1, "eval.subset_size", "must be at least 1");
}

std::string config_digest(const RunConfig& cfg) { return fnv1a64_hex(serialize_config(cfg)); }

}  // namespace coea
