#include "coea/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <unordered_map>

#include "coea/errors.hpp"
#include "coea/training.hpp"

namespace coea {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

void ensure_dirs(const RunPaths& paths) {
    fs::create_directories(paths.out_dir);
    fs::create_directories(paths.data_dir());
    fs::create_directories(paths.artifacts_dir());
    fs::create_directories(paths.reports_dir());
}

Rng stage_rng(const RunConfig& cfg, const std::string& stage) {
    return Rng(cfg.run.seed).fork(fnv1a64(stage));
}

void need(const std::string& path, const std::string& producing_verb) {
    if (!fs::exists(path)) {
        throw UsageError(path + " is missing; run `coea " + producing_verb + "` first");
    }
}

std::string basename(const std::string& path) { return fs::path(path).filename().string(); }

void finish_stage(Manifest& manifest, const RunConfig& cfg, const RunPaths& paths,
                  const std::string& stage, const std::vector<std::string>& inputs,
                  const std::vector<std::string>& outputs, Clock::time_point t0) {
    StageEntry entry;
    entry.stage = stage;
    for (const auto& p : inputs) entry.inputs[basename(p)] = file_digest(p);
    for (const auto& p : outputs) entry.outputs[basename(p)] = file_digest(p);
    manifest.set_config_digest(config_digest(cfg));
    manifest.record(entry);
    manifest.record_timing(stage, std::chrono::duration<double>(Clock::now() - t0).count());
    manifest.save(paths.manifest_path());
    manifest.save_timings(paths.timings_path());
}

Json layer_to_json(const CsaLayerParams& l) {
    Json j;
    j["w_q"] = Json::array();
    for (const auto& m : l.w_q) j["w_q"].push_back(matrix_to_json(m));
    j["w_k"] = Json::array();
    for (const auto& m : l.w_k) j["w_k"].push_back(matrix_to_json(m));
    j["w_v"] = Json::array();
    for (const auto& m : l.w_v) j["w_v"].push_back(matrix_to_json(m));
    j["w_o"] = matrix_to_json(l.w_o);
    j["ln_gain"] = vec_to_json(l.ln_gain);
    j["ln_bias"] = vec_to_json(l.ln_bias);
    return j;
}

CsaLayerParams layer_from_json(const Json& j) {
    CsaLayerParams l;
    for (const auto& m : j.at("w_q")) l.w_q.push_back(matrix_from_json(m));
    for (const auto& m : j.at("w_k")) l.w_k.push_back(matrix_from_json(m));
    for (const auto& m : j.at("w_v")) l.w_v.push_back(matrix_from_json(m));
    l.w_o = matrix_from_json(j.at("w_o"));
    l.ln_gain = vec_from_json(j.at("ln_gain"));
    l.ln_bias = vec_from_json(j.at("ln_bias"));
    return l;
}

std::unordered_map<ItemId, std::string> unordered_catalog(
    const std::map<ItemId, std::string>& items) {
    std::unordered_map<ItemId, std::string> out;
    out.reserve(items.size());
    for (const auto& [item, cat] : items) out.emplace(item, cat);
    return out;
}

UserAttributes attrs_or_default(const IngestArtifact& a, const UserId& user) {
    auto it = a.attributes.find(user);
    if (it != a.attributes.end()) return it->second;
    UserAttributes def;
    def.user_id = user;
    return def;
}

IngestArtifact load_ingest(const RunPaths& paths) {
    need(paths.ingest_path(), "ingest");
    return ingest_from_json(read_json_file(paths.ingest_path()));
}

std::map<UserId, Vec> load_representations(const RunPaths& paths, size_t expect_d) {
    need(paths.representations_path(), "train-encoder");
    Json j = read_json_file(paths.representations_path());
    size_t d = j.at("d").get<size_t>();
    if (expect_d != 0 && d != expect_d) {
        throw UsageError("representations have dim " + std::to_string(d) +
                         " but encoder.d is " + std::to_string(expect_d));
    }
    std::map<UserId, Vec> reps;
    for (const auto& [user, vec] : j.at("users").items()) {
        Vec v = vec_from_json(vec);
        if (v.size() != d) throw DataError("representation dim mismatch for user " + user);
        reps.emplace(user, std::move(v));
    }
    return reps;
}

std::map<UserId, GroupCSID> load_csids(const RunPaths& paths) {
    need(paths.csids_path(), "train-rqvae");
    Json j = read_json_file(paths.csids_path());
    std::map<UserId, GroupCSID> out;
    for (const auto& [user, s] : j.items()) out.emplace(user, csid_from_string(s.get<std::string>()));
    return out;
}

struct GroupArtifact {
    std::vector<SemanticGroup> groups;
    std::map<std::string, std::vector<UserId>> representatives;  // by csid string
    std::map<std::string, int> feature_index;                    // by csid string
};

GroupArtifact load_groups(const RunPaths& paths) {
    need(paths.groups_path(), "group");
    Json j = read_json_file(paths.groups_path());
    GroupArtifact out;
    for (const auto& gj : j) {
        SemanticGroup g;
        std::string cs = gj.at("csid").get<std::string>();
        g.csid = csid_from_string(cs);
        for (const auto& m : gj.at("members")) g.members.push_back(m.get<std::string>());
        g.centroid = vec_from_json(gj.at("centroid"));
        std::vector<UserId> reps;
        for (const auto& r : gj.at("representatives")) reps.push_back(r.get<std::string>());
        out.representatives[cs] = std::move(reps);
        out.feature_index[cs] = static_cast<int>(out.groups.size());
        out.groups.push_back(std::move(g));
    }
    return out;
}

std::map<std::string, std::string> load_profiles(const RunPaths& paths) {
    need(paths.profiles_path(), "profile");
    Json j = read_json_file(paths.profiles_path());
    std::map<std::string, std::string> out;
    for (const auto& [csid, text] : j.items()) out[csid] = text.get<std::string>();
    return out;
}

PromptTemplates load_templates(const RunConfig& cfg) {
    if (cfg.gateway.template_dir.empty()) return PromptTemplates::builtin();
    return PromptTemplates::load_dir(cfg.gateway.template_dir);
}

std::unique_ptr<LlmBackend> make_backend(const RunConfig& cfg, const Vocab& categories,
                                         const NoveltyPolicy* policy, const RewardModel* reward,
                                         uint64_t seed) {
    if (cfg.gateway.backend == "http") {
        HttpBackendConfig h;
        h.url = cfg.gateway.endpoint;
        h.model = cfg.gateway.model;
        h.api_key_env = cfg.gateway.api_key_env;
        h.timeout_sec = std::max<int>(1, static_cast<int>(cfg.gateway.timeout_ms / 1000));
        h.max_retries = static_cast<int>(cfg.gateway.retries);
        h.backoff_ms = static_cast<int>(cfg.gateway.backoff_ms);
        return std::make_unique<HttpBackend>(h, categories);
    }
    return std::make_unique<SimulatedBackend>(policy, reward, seed);
}

// Click volume per category over every user's train window.
std::map<std::string, size_t> category_click_volume(const IngestArtifact& a) {
    std::map<std::string, size_t> volume;
    for (const auto& [user, seq] : a.sequences) {
        for (const auto& cat : train_category_seq(seq, a.item_category)) ++volume[cat];
    }
    return volume;
}

std::vector<std::string> popularity_order(const std::map<std::string, size_t>& volume,
                                          const std::vector<std::string>& all_categories) {
    std::vector<std::string> order = all_categories;
    auto vol = [&](const std::string& c) {
        auto it = volume.find(c);
        return it == volume.end() ? size_t{0} : it->second;
    };
    std::stable_sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
        size_t va = vol(a), vb = vol(b);
        if (va != vb) return va > vb;
        return a < b;
    });
    return order;
}

}  // namespace

RunLock::RunLock(const std::string& path) : path_(path) {
    int fd = ::open(path.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
        throw UsageError("run directory is locked (" + path +
                         " exists); remove the stale lock if no other run is active");
    }
    std::string pid = std::to_string(::getpid()) + "\n";
    ssize_t written = ::write(fd, pid.data(), pid.size());
    (void)written;
    ::close(fd);
}

RunLock::~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

Json encoder_to_json(const EncoderParams& p) {
    Json j;
    j["shape"] = {{"d", p.shape.d},
                  {"layers", p.shape.layers},
                  {"heads", p.shape.heads},
                  {"t_max", p.shape.t_max},
                  {"n_age", p.shape.n_age},
                  {"n_gender", p.shape.n_gender},
                  {"n_occupation", p.shape.n_occupation},
                  {"ln_eps", p.shape.ln_eps}};
    j["items"] = p.items.names();
    j["w_emb"] = matrix_to_json(p.w_emb);
    j["positions"] = matrix_to_json(p.positions);
    j["age_emb"] = matrix_to_json(p.age_emb);
    j["gender_emb"] = matrix_to_json(p.gender_emb);
    j["occ_emb"] = matrix_to_json(p.occ_emb);
    j["layers"] = Json::array();
    for (const auto& l : p.layers) j["layers"].push_back(layer_to_json(l));
    return j;
}

EncoderParams encoder_from_json(const Json& j) {
    EncoderParams p;
    const Json& s = j.at("shape");
    p.shape.d = s.at("d").get<size_t>();
    p.shape.layers = s.at("layers").get<size_t>();
    p.shape.heads = s.at("heads").get<size_t>();
    p.shape.t_max = s.at("t_max").get<size_t>();
    p.shape.n_age = s.at("n_age").get<size_t>();
    p.shape.n_gender = s.at("n_gender").get<size_t>();
    p.shape.n_occupation = s.at("n_occupation").get<size_t>();
    p.shape.ln_eps = s.at("ln_eps").get<double>();
    p.items = Vocab(j.at("items").get<std::vector<std::string>>());
    p.w_emb = matrix_from_json(j.at("w_emb"));
    p.positions = matrix_from_json(j.at("positions"));
    p.age_emb = matrix_from_json(j.at("age_emb"));
    p.gender_emb = matrix_from_json(j.at("gender_emb"));
    p.occ_emb = matrix_from_json(j.at("occ_emb"));
    for (const auto& l : j.at("layers")) p.layers.push_back(layer_from_json(l));
    if (p.layers.size() != p.shape.layers || p.w_emb.cols() != p.items.size() ||
        p.w_emb.rows() != p.shape.d || p.positions.rows() != p.shape.t_max + 1) {
        throw DataError("encoder checkpoint is inconsistent with its declared shape");
    }
    return p;
}

Json rqvae_to_json(const RqVaeParams& p) {
    Json j;
    j["shape"] = {{"d", p.shape.d},       {"d_h", p.shape.d_h},
                  {"d_z", p.shape.d_z},   {"levels", p.shape.levels},
                  {"codebook_size", p.shape.codebook_size}, {"beta_c", p.shape.beta_c}};
    j["w1"] = matrix_to_json(p.w1);
    j["b1"] = vec_to_json(p.b1);
    j["w2"] = matrix_to_json(p.w2);
    j["b2"] = vec_to_json(p.b2);
    j["v1"] = matrix_to_json(p.v1);
    j["c1"] = vec_to_json(p.c1);
    j["v2"] = matrix_to_json(p.v2);
    j["c2"] = vec_to_json(p.c2);
    j["codebooks"] = Json::array();
    for (const auto& cb : p.codebooks) j["codebooks"].push_back(matrix_to_json(cb));
    return j;
}

RqVaeParams rqvae_from_json(const Json& j) {
    RqVaeParams p;
    const Json& s = j.at("shape");
    p.shape.d = s.at("d").get<size_t>();
    p.shape.d_h = s.at("d_h").get<size_t>();
    p.shape.d_z = s.at("d_z").get<size_t>();
    p.shape.levels = s.at("levels").get<size_t>();
    p.shape.codebook_size = s.at("codebook_size").get<size_t>();
    p.shape.beta_c = s.at("beta_c").get<double>();
    p.w1 = matrix_from_json(j.at("w1"));
    p.b1 = vec_from_json(j.at("b1"));
    p.w2 = matrix_from_json(j.at("w2"));
    p.b2 = vec_from_json(j.at("b2"));
    p.v1 = matrix_from_json(j.at("v1"));
    p.c1 = vec_from_json(j.at("c1"));
    p.v2 = matrix_from_json(j.at("v2"));
    p.c2 = vec_from_json(j.at("c2"));
    for (const auto& cb : j.at("codebooks")) p.codebooks.push_back(matrix_from_json(cb));
    if (p.codebooks.size() != p.shape.levels) {
        throw DataError("quantizer checkpoint is inconsistent with its declared shape");
    }
    return p;
}

Json policy_to_json(const NoveltyPolicy& p) {
    Json j;
    j["n_groups"] = p.n_groups;
    j["categories"] = p.categories.names();
    j["w"] = matrix_to_json(p.w);
    j["b"] = vec_to_json(p.b);
    return j;
}

NoveltyPolicy policy_from_json(const Json& j) {
    NoveltyPolicy p;
    p.n_groups = j.at("n_groups").get<size_t>();
    p.categories = Vocab(j.at("categories").get<std::vector<std::string>>());
    p.w = matrix_from_json(j.at("w"));
    p.b = vec_from_json(j.at("b"));
    if (p.w.rows() != p.categories.size() ||
        p.w.cols() != p.n_groups + p.categories.size() || p.b.size() != p.categories.size()) {
        throw DataError("policy checkpoint is inconsistent with its declared shape");
    }
    return p;
}

Json reward_to_json(const RewardModel& m) {
    Json j;
    j["n_groups"] = m.n_groups;
    j["categories"] = m.categories.names();
    j["d_r"] = m.d_r;
    j["ctx_w"] = vec_to_json(m.ctx_w);
    j["emb"] = matrix_to_json(m.emb);
    j["bil"] = matrix_to_json(m.bil);
    return j;
}

RewardModel reward_from_json(const Json& j) {
    RewardModel m;
    m.n_groups = j.at("n_groups").get<size_t>();
    m.categories = Vocab(j.at("categories").get<std::vector<std::string>>());
    m.d_r = j.at("d_r").get<size_t>();
    m.ctx_w = vec_from_json(j.at("ctx_w"));
    m.emb = matrix_from_json(j.at("emb"));
    m.bil = matrix_from_json(j.at("bil"));
    if (m.emb.rows() != m.categories.size() || m.emb.cols() != m.d_r ||
        m.bil.rows() != m.d_r || m.ctx_w.size() != m.n_groups + m.categories.size()) {
        throw DataError("reward checkpoint is inconsistent with its declared shape");
    }
    return m;
}

Json ingest_to_json(const IngestArtifact& a) {
    Json j;
    j["categories"] = a.categories.names();
    j["items"] = Json::object();
    for (const auto& [item, cat] : a.item_category) j["items"][item] = cat;
    j["attributes"] = Json::object();
    for (const auto& [user, at] : a.attributes) {
        j["attributes"][user] = {{"age", at.age_bucket},
                                 {"gender", static_cast<int>(at.gender)},
                                 {"occupation", at.occupation}};
    }
    j["sequences"] = Json::array();
    for (const auto& [user, seq] : a.sequences) {
        Json sj;
        sj["user"] = user;
        sj["long"] = seq.long_term;
        sj["short"] = seq.short_term;
        sj["k_window"] = seq.k_window;
        j["sequences"].push_back(std::move(sj));
    }
    j["test"] = Json::object();
    for (const auto& [user, cats] : a.test_categories) {
        j["test"][user] = std::vector<std::string>(cats.begin(), cats.end());
    }
    return j;
}

IngestArtifact ingest_from_json(const Json& j) {
    IngestArtifact a;
    a.categories = Vocab(j.at("categories").get<std::vector<std::string>>());
    for (const auto& [item, cat] : j.at("items").items()) {
        a.item_category[item] = cat.get<std::string>();
    }
    for (const auto& [user, at] : j.at("attributes").items()) {
        UserAttributes u;
        u.user_id = user;
        u.age_bucket = at.at("age").get<int>();
        u.gender = static_cast<Gender>(at.at("gender").get<int>());
        u.occupation = at.at("occupation").get<int>();
        a.attributes.emplace(user, std::move(u));
    }
    for (const auto& sj : j.at("sequences")) {
        UserSequence seq;
        seq.user_id = sj.at("user").get<std::string>();
        seq.long_term = sj.at("long").get<std::vector<ItemId>>();
        seq.short_term = sj.at("short").get<std::vector<ItemId>>();
        seq.k_window = sj.at("k_window").get<size_t>();
        a.sequences.emplace(seq.user_id, std::move(seq));
    }
    for (const auto& [user, cats] : j.at("test").items()) {
        a.test_categories[user] =
            std::set<std::string>(cats.begin(), cats.end());
    }
    return a;
}

std::vector<std::string> train_category_seq(const UserSequence& seq,
                                            const std::map<ItemId, std::string>& catalog) {
    std::vector<std::string> out;
    out.reserve(seq.long_term.size() + seq.short_term.size());
    auto push = [&](const ItemId& item) {
        auto it = catalog.find(item);
        if (it == catalog.end()) throw DataError("item missing from catalog: " + item);
        out.push_back(it->second);
    };
    for (const auto& item : seq.long_term) push(item);
    for (const auto& item : seq.short_term) push(item);
    return out;
}

void stage_synth(const RunConfig& cfg, const RunPaths& paths, Manifest& manifest) {
    auto t0 = Clock::now();
    ensure_dirs(paths);
    MlSynthConfig ms;
    ms.seed = cfg.run.seed;
    write_movielens_dataset(paths.data_dir(), ms);
    finish_stage(manifest, cfg, paths, "synth", {},
                 {paths.data_dir() + "/ratings.dat", paths.data_dir() + "/movies.dat",
                  paths.data_dir() + "/users.dat"},
                 t0);
}

void stage_ingest(const RunConfig& cfg, const RunPaths& paths, const std::string& dataset_dir,
                  Manifest& manifest) {
    auto t0 = Clock::now();
    ensure_dirs(paths);
    std::string dir = dataset_dir.empty() ? paths.data_dir() : dataset_dir;
    ParseMode mode = cfg.data.mode == "skip" ? ParseMode::skip : ParseMode::strict;

    std::vector<InteractionEvent> events;
    std::vector<CatalogItem> catalog_items;
    IngestArtifact a;
    std::vector<std::string> inputs;
    if (cfg.data.format == "movielens_1m") {
        std::string ratings = dir + "/ratings.dat";
        std::string movies = dir + "/movies.dat";
        std::string users = dir + "/users.dat";
        for (const auto& p : {ratings, movies, users}) {
            if (!fs::exists(p)) {
                throw UsageError(p +
                                 " is missing; run `coea synth` or point --data at a "
                                 "MovieLens-1M directory");
            }
        }
        inputs = {ratings, movies, users};
        std::ifstream rf(ratings), mf(movies), uf(users);
        events = parse_interactions(rf, LogFormat::movielens_1m, mode);
        catalog_items = parse_movielens_movies(mf, mode);
        for (auto& u : parse_movielens_users(uf, mode)) a.attributes.emplace(u.user_id, u);
    } else {
        std::string ev = dir + "/events.tsv";
        std::string cat = dir + "/catalog.tsv";
        for (const auto& p : {ev, cat}) {
            if (!fs::exists(p)) {
                throw UsageError(p + " is missing; point --data at a directory with events.tsv "
                                     "and catalog.tsv");
            }
        }
        inputs = {ev, cat};
        std::ifstream ef(ev), cf(cat);
        events = parse_interactions(ef, LogFormat::tsv, mode);
        catalog_items = parse_catalog_tsv(cf, mode);
    }

    std::set<std::string> cat_names;
    for (const auto& item : catalog_items) {
        a.item_category[item.item_id] = item.category;
        cat_names.insert(item.category);
    }
    a.categories = Vocab(std::vector<std::string>(cat_names.begin(), cat_names.end()));

    SplitResult split = temporal_split(events, SplitPolicy::leave_one_out);
    a.sequences = build_sequences(split.train, cfg.data.k_short);
    for (const auto& ev : split.test) {
        auto it = a.item_category.find(ev.item_id);
        if (it == a.item_category.end()) {
            throw DataError("test-window item missing from catalog: " + ev.item_id);
        }
        a.test_categories[ev.user_id].insert(it->second);
    }

    write_json_file(paths.ingest_path(), ingest_to_json(a));
    finish_stage(manifest, cfg, paths, "ingest", inputs, {paths.ingest_path()}, t0);
}

void stage_train_encoder(const RunConfig& cfg, const RunPaths& paths, Manifest& manifest) {
    auto t0 = Clock::now();
    ensure_dirs(paths);
    IngestArtifact a = load_ingest(paths);

    EncoderShape shape;
    shape.d = cfg.encoder.d;
    shape.layers = cfg.encoder.layers;
    shape.heads = cfg.encoder.heads;
    shape.t_max = cfg.encoder.t_max;

    std::vector<std::string> item_names;
    item_names.reserve(a.item_category.size());
    for (const auto& [item, cat] : a.item_category) item_names.push_back(item);
    Vocab items(item_names);

    Rng rng = stage_rng(cfg, "train-encoder");
    EncoderParams params = init_encoder(items, shape, rng);

    std::vector<EncoderExample> batch;
    batch.reserve(a.sequences.size());
    for (const auto& [user, seq] : a.sequences) {
        auto clicks = long_click_counts(seq);
        EncoderExample ex;
        ex.filtered = filter_long_sequence(seq, clicks, cfg.data.tau);
        ex.attrs = attrs_or_default(a, user);
        batch.push_back(std::move(ex));
    }

    EncoderTrainConfig tc;
    tc.steps = cfg.encoder.steps;
    tc.lr = cfg.encoder.lr;
    tc.momentum = cfg.encoder.momentum;
    TrainTrace trace = train_encoder(params, batch, tc);

    Json ej;
    ej["params"] = encoder_to_json(params);
    ej["trace"] = trace.loss;
    write_json_file(paths.encoder_path(), ej);

    Json rj;
    rj["d"] = shape.d;
    rj["users"] = Json::object();
    size_t bi = 0;
    for (const auto& [user, seq] : a.sequences) {
        const auto& ex = batch[bi++];
        rj["users"][user] = vec_to_json(encode_long_term(ex.filtered, ex.attrs, params).u_long);
    }
    write_json_file(paths.representations_path(), rj);

    finish_stage(manifest, cfg, paths, "train-encoder", {paths.ingest_path()},
                 {paths.encoder_path(), paths.representations_path()}, t0);
}

void stage_train_rqvae(const RunConfig& cfg, const RunPaths& paths, Manifest& manifest) {
    auto t0 = Clock::now();
    ensure_dirs(paths);
    std::map<UserId, Vec> reps = load_representations(paths, cfg.encoder.d);

    RqVaeShape shape;
    shape.d = cfg.encoder.d;
    shape.d_h = cfg.quantizer.d_h;
    shape.d_z = cfg.quantizer.d_z;
    shape.levels = cfg.quantizer.levels;
    shape.codebook_size = cfg.quantizer.codebook_size;
    shape.beta_c = cfg.quantizer.beta_c;

    std::vector<Vec> batch;
    batch.reserve(reps.size());
    for (const auto& [user, v] : reps) batch.push_back(v);

    RqVaeTrainConfig tc;
    tc.epochs = cfg.quantizer.epochs;
    tc.lr = cfg.quantizer.lr;
    Rng rng = stage_rng(cfg, "train-rqvae");
    RqVaeTrainResult result = train_rqvae(batch, shape, tc, rng);

    Json qj;
    qj["params"] = rqvae_to_json(result.params);
    qj["trace"] = result.loss;
    write_json_file(paths.rqvae_path(), qj);

    Json cj = Json::object();
    for (const auto& [user, v] : reps) {
        cj[user] = csid_to_string(assign_csid(result.params, v));
    }
    write_json_file(paths.csids_path(), cj);

    finish_stage(manifest, cfg, paths, "train-rqvae", {paths.representations_path()},
                 {paths.rqvae_path(), paths.csids_path()}, t0);
}

void stage_group(const RunConfig& cfg, const RunPaths& paths, Manifest& manifest) {
    auto t0 = Clock::now();
    ensure_dirs(paths);
    std::map<UserId, GroupCSID> assignments = load_csids(paths);
    std::map<UserId, Vec> reps = load_representations(paths, cfg.encoder.d);

    std::vector<SemanticGroup> groups = build_groups(assignments, reps);
    Json j = Json::array();
    for (const auto& g : groups) {
        Json gj;
        gj["csid"] = csid_to_string(g.csid);
        gj["members"] = g.members;
        gj["representatives"] = select_representatives(g, reps, cfg.grouping.representatives);
        gj["centroid"] = vec_to_json(g.centroid);
        j.push_back(std::move(gj));
    }
    write_json_file(paths.groups_path(), j);

    finish_stage(manifest, cfg, paths, "group",
                 {paths.csids_path(), paths.representations_path()}, {paths.groups_path()}, t0);
}

void stage_profile(const RunConfig& cfg, const RunPaths& paths, Manifest& manifest) {
    auto t0 = Clock::now();
    ensure_dirs(paths);
    GroupArtifact ga = load_groups(paths);
    IngestArtifact a = load_ingest(paths);

    PromptTemplates templates = load_templates(cfg);
    auto backend = make_backend(cfg, a.categories, nullptr, nullptr,
                                stage_rng(cfg, "profile").next_u64());

    Json out = Json::object();
    for (const auto& g : ga.groups) {
        std::string cs = csid_to_string(g.csid);
        std::vector<std::vector<std::string>> rep_seqs;
        for (const auto& user : ga.representatives.at(cs)) {
            auto it = a.sequences.find(user);
            if (it == a.sequences.end()) {
                throw DataError("representative user has no sequence: " + user);
            }
            rep_seqs.push_back(train_category_seq(it->second, a.item_category));
        }
        out[cs] = generate_profile(*backend, templates, rep_seqs);
    }
    write_json_file(paths.profiles_path(), out);

    finish_stage(manifest, cfg, paths, "profile", {paths.groups_path(), paths.ingest_path()},
                 {paths.profiles_path()}, t0);
}

void stage_bootstrap(const RunConfig& cfg, const RunPaths& paths, Manifest& manifest) {
    auto t0 = Clock::now();
    ensure_dirs(paths);
    IngestArtifact a = load_ingest(paths);
    std::map<UserId, GroupCSID> csids = load_csids(paths);
    GroupArtifact ga = load_groups(paths);

    auto group_of = [&](const UserId& user) -> int {
        auto it = csids.find(user);
        if (it == csids.end()) return -1;
        return ga.feature_index.at(csid_to_string(it->second));
    };

    std::vector<SftExample> sft;
    std::map<UserId, std::vector<std::string>> train_seqs;
    std::map<UserId, int> user_group;
    for (const auto& [user, seq] : a.sequences) {
        std::vector<std::string> short_cats;
        short_cats.reserve(seq.short_term.size());
        std::set<std::string> long_cats;
        for (const auto& item : seq.long_term) long_cats.insert(a.item_category.at(item));
        for (const auto& item : seq.short_term) short_cats.push_back(a.item_category.at(item));
        int g = group_of(user);
        auto per_user = build_sft_examples(short_cats, long_cats, g, a.categories);
        sft.insert(sft.end(), per_user.begin(), per_user.end());
        train_seqs[user] = train_category_seq(seq, a.item_category);
        user_group[user] = g;
    }

    NoveltyPolicy policy = init_policy(ga.groups.size(), a.categories);
    SftTrainConfig sc;
    sc.epochs = cfg.training.sft_epochs;
    sc.adam.lr = cfg.training.sft_lr;
    train_sft(policy, sft, sc);
    write_json_file(paths.policy_path(), policy_to_json(policy));

    Rng pair_rng = stage_rng(cfg, "bootstrap-pairs");
    std::vector<PreferencePair> pairs =
        build_preference_pairs(train_seqs, user_group, a.categories, cfg.training.top_p, pair_rng);

    Rng reward_rng = stage_rng(cfg, "bootstrap-reward");
    RewardModel reward =
        init_reward(ga.groups.size(), a.categories, cfg.training.reward_dim, reward_rng);
    RmTrainConfig rc;
    rc.epochs = cfg.training.rm_epochs;
    rc.adam.lr = cfg.training.rm_lr;
    train_rm(reward, pairs, rc);
    write_json_file(paths.reward_path(), reward_to_json(reward));

    finish_stage(manifest, cfg, paths, "bootstrap",
                 {paths.ingest_path(), paths.csids_path(), paths.groups_path()},
                 {paths.policy_path(), paths.reward_path()}, t0);
}

void stage_pco_run(const RunConfig& cfg, const RunPaths& paths, Manifest& manifest) {
    auto t0 = Clock::now();
    ensure_dirs(paths);
    need(paths.policy_path(), "bootstrap");
    need(paths.reward_path(), "bootstrap");
    IngestArtifact a = load_ingest(paths);
    std::map<UserId, GroupCSID> csids = load_csids(paths);
    GroupArtifact ga = load_groups(paths);
    std::map<std::string, std::string> profiles = load_profiles(paths);

    auto catalog = unordered_catalog(a.item_category);

    std::vector<PcoContext> contexts;
    std::map<UserId, std::vector<std::string>> train_seqs;
    std::map<UserId, int> user_group;
    for (const auto& [user, seq] : a.sequences) {
        auto cit = csids.find(user);
        if (cit == csids.end()) continue;  // no representation, handled via fallback at query time
        std::string cs = csid_to_string(cit->second);
        auto pit = profiles.find(cs);
        if (pit == profiles.end()) {
            throw DataError("no profile for csid " + cs + "; rerun `coea profile`");
        }
        PcoContext ctx;
        ctx.csid = cit->second;
        ctx.group_feature = ga.feature_index.at(cs);
        ctx.profile_text = pit->second;
        ctx.short_categories = map_short_to_categories(seq, catalog).categories;
        for (const auto& c : ctx.short_categories) {
            ctx.excluded_ids.push_back(a.categories.require(c));
        }
        std::set<int> history;
        for (const auto& c : train_category_seq(seq, a.item_category)) {
            history.insert(a.categories.require(c));
        }
        ctx.history_ids.assign(history.begin(), history.end());
        contexts.push_back(std::move(ctx));

        train_seqs[user] = train_category_seq(seq, a.item_category);
        user_group[user] = ctx.group_feature;
    }

    CycleState state;
    state.policy = policy_from_json(read_json_file(paths.policy_path()));
    state.ref = state.policy;
    state.alpha = cfg.pco.alpha;
    state.beta = cfg.pco.beta;
    RewardModel reward = reward_from_json(read_json_file(paths.reward_path()));

    PromptTemplates templates = load_templates(cfg);
    auto backend = make_backend(cfg, a.categories, &state.policy, &reward,
                                stage_rng(cfg, "pco-backend").next_u64());

    PcoConfig pc;
    pc.alpha = cfg.pco.alpha;
    pc.beta = cfg.pco.beta;
    pc.steps = cfg.pco.steps;
    pc.batch_size = cfg.pco.batch_size;
    pc.m_cand = cfg.pco.m_n;
    pc.tau_align = cfg.pco.tau_align;
    pc.retrain_reward = cfg.pco.retrain_reward;
    pc.rm_epochs = cfg.pco.rm_epochs;
    pc.adam.lr = cfg.pco.lr;
    pc.rm_adam.lr = cfg.training.rm_lr;

    // Fresh store per run keeps the verb idempotent.
    fs::remove(paths.store_path());
    Store store(paths.store_path());

    Rng rng = stage_rng(cfg, "pco");
    std::string csv = cycle_csv_header() + "\n";
    for (size_t c = 0; c < cfg.pco.cycles; ++c) {
        CycleInputs inputs;
        inputs.contexts = contexts;
        inputs.behavior_pairs =
            build_preference_pairs(train_seqs, user_group, a.categories, cfg.training.top_p, rng);
        CycleReport report =
            run_cycle(state, inputs, *backend, templates, reward, &store, pc, rng);
        csv += cycle_csv_row(report) + "\n";
    }

    write_text_file(paths.cycles_csv_path(), csv);
    write_json_file(paths.policy_pco_path(), policy_to_json(state.policy));
    write_json_file(paths.reward_pco_path(), reward_to_json(reward));

    finish_stage(manifest, cfg, paths, "pco-run",
                 {paths.policy_path(), paths.reward_path(), paths.groups_path(),
                  paths.profiles_path(), paths.csids_path(), paths.ingest_path()},
                 {paths.store_path(), paths.cycles_csv_path(), paths.policy_pco_path(),
                  paths.reward_pco_path()},
                 t0);
}

MetricReport stage_eval(const RunConfig& cfg, const RunPaths& paths, Manifest& manifest) {
    auto t0 = Clock::now();
    ensure_dirs(paths);
    need(paths.store_path(), "pco-run");
    IngestArtifact a = load_ingest(paths);
    std::map<UserId, GroupCSID> csids = load_csids(paths);
    GroupArtifact ga = load_groups(paths);
    std::map<UserId, Vec> reps = load_representations(paths, cfg.encoder.d);

    size_t k_eval = cfg.eval.k;
    if (a.categories.size() < k_eval) {
        throw UsageError("eval.k exceeds the category vocabulary size");
    }

    auto catalog = unordered_catalog(a.item_category);
    auto volume = category_click_volume(a);
    auto pop = popularity_order(volume, a.categories.names());
    GroupCSID default_csid = default_group(ga.groups);
    Store store(paths.store_path());

    TruthMap truths;
    std::vector<RecommendationList> lists;
    for (const auto& [user, test_cats] : a.test_categories) {
        auto sit = a.sequences.find(user);
        if (sit == a.sequences.end()) continue;
        const UserSequence& seq = sit->second;

        UserGroundTruth truth;
        truth.preferred = test_cats;
        truth.test_clicked = test_cats;
        for (const auto& c : train_category_seq(seq, a.item_category)) {
            truth.historical.insert(c);
        }
        truths[user] = std::move(truth);

        auto cit = csids.find(user);
        std::optional<GroupCSID> csid;
        if (cit != csids.end()) csid = cit->second;
        auto short_cats = map_short_to_categories(seq, catalog).categories;
        auto rec = store.lookup_with_fallback(csid, short_cats, default_csid);

        RecommendationList list;
        list.user_id = user;
        std::set<std::string> used;
        if (rec) {
            std::vector<ScoredCategory> ranked = rec->categories;
            std::stable_sort(ranked.begin(), ranked.end(),
                             [](const ScoredCategory& x, const ScoredCategory& y) {
                                 if (x.score != y.score) return x.score > y.score;
                                 return x.category < y.category;
                             });
            for (const auto& sc : ranked) {
                if (used.insert(sc.category).second) list.ranked.push_back(sc.category);
            }
        }
        for (const auto& c : pop) {
            if (list.ranked.size() >= k_eval) break;
            if (used.insert(c).second) list.ranked.push_back(c);
        }
        lists.push_back(std::move(list));
    }

    auto tail = long_tail_set(volume, a.categories.names());
    MetricReport report = evaluate_lists(lists, truths, tail, k_eval, a.categories.size());
    write_text_file(paths.metrics_csv_path(), metric_csv(report));
    write_text_file(paths.per_user_tsv_path(), per_user_tsv(report));

    Rng sim_rng = stage_rng(cfg, "eval-similarity");
    std::vector<GroupCSID> sampled;
    Matrix sim = group_similarity_analysis(ga.groups, reps, cfg.eval.n_groups_sampled,
                                           cfg.eval.subset_size, sim_rng, &sampled);
    write_text_file(paths.similarity_csv_path(), similarity_csv(sim, sampled));

    finish_stage(manifest, cfg, paths, "eval",
                 {paths.store_path(), paths.ingest_path(), paths.csids_path(),
                  paths.groups_path(), paths.representations_path()},
                 {paths.metrics_csv_path(), paths.per_user_tsv_path(),
                  paths.similarity_csv_path()},
                 t0);
    return report;
}

QueryResult query_user(const RunPaths& paths, const UserId& user) {
    need(paths.store_path(), "pco-run");
    IngestArtifact a = load_ingest(paths);
    std::map<UserId, GroupCSID> csids = load_csids(paths);
    GroupArtifact ga = load_groups(paths);

    std::optional<GroupCSID> csid;
    auto cit = csids.find(user);
    if (cit != csids.end()) csid = cit->second;

    std::vector<std::string> short_cats;
    auto sit = a.sequences.find(user);
    if (sit != a.sequences.end()) {
        short_cats = map_short_to_categories(sit->second, unordered_catalog(a.item_category))
                         .categories;
    }

    GroupCSID default_csid = default_group(ga.groups);
    Store store(paths.store_path());
    auto rec = store.lookup_with_fallback(csid, short_cats, default_csid);

    QueryResult out;
    std::string primary = csid ? make_key(*csid, short_cats).str() : std::string();
    if (rec) {
        out.key = rec->key;
        out.fallback = !csid || rec->key != primary;
    } else {
        out.key = csid ? primary : make_key(default_csid, short_cats).str();
        out.fallback = !csid;
    }
    out.record = rec;
    return out;
}

void stage_export(const RunPaths& paths, Manifest& manifest) {
    auto t0 = Clock::now();
    need(paths.store_path(), "pco-run");
    GroupArtifact ga = load_groups(paths);
    std::map<std::string, std::string> profiles = load_profiles(paths);

    Store store(paths.store_path());
    write_text_file(paths.store_tsv_path(), store.export_tsv());

    std::vector<GroupProfile> gp;
    for (const auto& g : ga.groups) {
        GroupProfile p;
        p.csid = g.csid;
        std::string cs = csid_to_string(g.csid);
        p.representative_users = ga.representatives.at(cs);
        auto it = profiles.find(cs);
        if (it != profiles.end()) p.profile_text = it->second;
        gp.push_back(std::move(p));
    }
    write_text_file(paths.groups_tsv_path(), format_group_table(ga.groups, gp));

    StageEntry entry;
    entry.stage = "export";
    entry.inputs["store.jsonl"] = file_digest(paths.store_path());
    entry.outputs["store.tsv"] = file_digest(paths.store_tsv_path());
    entry.outputs["groups.tsv"] = file_digest(paths.groups_tsv_path());
    manifest.record(entry);
    manifest.record_timing("export", std::chrono::duration<double>(Clock::now() - t0).count());
    manifest.save(paths.manifest_path());
    manifest.save_timings(paths.timings_path());
}

void stage_compact(const RunPaths& paths, Manifest& manifest) {
    auto t0 = Clock::now();
    need(paths.store_path(), "pco-run");
    Store store(paths.store_path());
    store.compact();

    StageEntry entry;
    entry.stage = "compact";
    entry.outputs["store.jsonl"] = file_digest(paths.store_path());
    manifest.record(entry);
    manifest.record_timing("compact", std::chrono::duration<double>(Clock::now() - t0).count());
    manifest.save(paths.manifest_path());
    manifest.save_timings(paths.timings_path());
}

MetricReport run_full_pipeline(const RunConfig& cfg, const std::string& out_dir,
                               const std::string& dataset_dir) {
    validate_config(cfg);
    RunPaths paths{out_dir};
    ensure_dirs(paths);
    RunLock lock(paths.lock_path());
    write_text_file(paths.config_path(), serialize_config(cfg));

    Manifest manifest = Manifest::open(paths.manifest_path());
    manifest.set_config_digest(config_digest(cfg));

    if (dataset_dir.empty()) stage_synth(cfg, paths, manifest);
    stage_ingest(cfg, paths, dataset_dir, manifest);
    stage_train_encoder(cfg, paths, manifest);
    stage_train_rqvae(cfg, paths, manifest);
    stage_group(cfg, paths, manifest);
    stage_profile(cfg, paths, manifest);
    stage_bootstrap(cfg, paths, manifest);
    stage_pco_run(cfg, paths, manifest);
    return stage_eval(cfg, paths, manifest);
}

}  // namespace coea
