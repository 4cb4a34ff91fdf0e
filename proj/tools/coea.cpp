#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "coea/pipeline.hpp"

namespace {

using namespace coea;

void print_query(const QueryResult& result) {
    std::printf("key: %s\n", result.key.c_str());
    std::printf("fallback: %s\n", result.fallback ? "true" : "false");
    if (!result.record) {
        std::printf("record: none\n");
        return;
    }
    std::printf("cycle: %lld\n", static_cast<long long>(result.record->cycle));
    for (const auto& sc : result.record->categories) {
        std::printf("  %s\t%.9f\n", sc.category.c_str(), sc.score);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CoEA exploratory recommendation pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "run";
    std::string data_dir;
    uint64_t seed = 0;
    app.add_option("--config", config_path, "INI config file (defaults when omitted)");
    app.add_option("--out-dir", out_dir, "run directory for artifacts and reports");
    auto* seed_opt = app.add_option("--seed", seed, "override run.seed");
    app.add_option("--data", data_dir, "dataset directory for ingest (default <out-dir>/data)");

    auto* synth = app.add_subcommand("synth", "generate the bundled MovieLens-format dataset");
    auto* ingest = app.add_subcommand("ingest", "parse logs into sequences and splits");
    auto* train_encoder =
        app.add_subcommand("train-encoder", "train the causal self-attention encoder");
    auto* train_rqvae = app.add_subcommand("train-rqvae", "train the residual quantizer");
    auto* group = app.add_subcommand("group", "build collaborative semantic groups");
    auto* profile = app.add_subcommand("profile", "generate group profiles");
    auto* bootstrap = app.add_subcommand("bootstrap", "SFT the novelty policy and train the RM");
    auto* pco_run = app.add_subcommand("pco-run", "run periodic collaborative optimization");
    auto* eval = app.add_subcommand("eval", "compute category metrics");
    size_t eval_k = 0;
    eval->add_option("--k", eval_k, "override eval.k");

    auto* query = app.add_subcommand("query", "look up a user's aligned categories");
    std::string query_user_id;
    query->add_option("--user", query_user_id, "user id")->required();

    auto* export_cmd = app.add_subcommand("export", "write store and group tables as TSV");
    auto* compact = app.add_subcommand("compact", "compact the aligned-category store");

    auto* ablation = app.add_subcommand("ablation", "KL-ablation experiment on the synthetic world");
    size_t ablation_rounds = 20;
    std::vector<double> ablation_alphas;
    std::vector<uint64_t> ablation_seeds;
    ablation->add_option("--rounds", ablation_rounds, "PCO rounds per arm");
    ablation->add_option("--alpha", ablation_alphas, "alpha arms (repeatable; default 0 and 0.4)");
    ablation->add_option("--world-seed", ablation_seeds, "seeds (repeatable; default 1 2 3)");

    auto* run = app.add_subcommand("run", "full pipeline: synth through eval");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::fflush(stdout);
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }

    try {
        RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
        if (seed_opt->count() > 0) cfg.run.seed = seed;
        if (eval_k > 0) cfg.eval.k = eval_k;
        validate_config(cfg);

        RunPaths paths{out_dir};
        std::filesystem::create_directories(paths.out_dir);

        if (query->parsed()) {
            print_query(query_user(paths, query_user_id));
            return 0;
        }

        RunLock lock(paths.lock_path());
        write_text_file(paths.config_path(), serialize_config(cfg));
        Manifest manifest = Manifest::open(paths.manifest_path());
        manifest.set_config_digest(config_digest(cfg));

        if (synth->parsed()) stage_synth(cfg, paths, manifest);
        if (ingest->parsed()) stage_ingest(cfg, paths, data_dir, manifest);
        if (train_encoder->parsed()) stage_train_encoder(cfg, paths, manifest);
        if (train_rqvae->parsed()) stage_train_rqvae(cfg, paths, manifest);
        if (group->parsed()) stage_group(cfg, paths, manifest);
        if (profile->parsed()) stage_profile(cfg, paths, manifest);
        if (bootstrap->parsed()) stage_bootstrap(cfg, paths, manifest);
        if (pco_run->parsed()) stage_pco_run(cfg, paths, manifest);
        if (eval->parsed()) {
            MetricReport report = stage_eval(cfg, paths, manifest);
            std::fputs(metric_csv(report).c_str(), stdout);
        }
        if (export_cmd->parsed()) stage_export(paths, manifest);
        if (compact->parsed()) stage_compact(paths, manifest);
        if (ablation->parsed()) {
            AblationConfig ac;
            ac.rounds = ablation_rounds;
            ac.pco.beta = cfg.pco.beta;
            if (ablation_alphas.empty()) ablation_alphas = {0.0, 0.4};
            if (ablation_seeds.empty()) ablation_seeds = {1, 2, 3};
            auto arms = run_ablation(ac, ablation_alphas, ablation_seeds);
            std::filesystem::create_directories(paths.reports_dir());
            write_text_file(paths.ablation_csv_path(), ablation_csv(arms));
            StageEntry entry;
            entry.stage = "ablation";
            entry.outputs["ablation.csv"] = file_digest(paths.ablation_csv_path());
            manifest.record(entry);
            manifest.save(paths.manifest_path());
            std::printf("wrote %s\n", paths.ablation_csv_path().c_str());
        }
        if (run->parsed()) {
            std::string dataset = data_dir;
            if (dataset.empty()) {
                stage_synth(cfg, paths, manifest);
            }
            stage_ingest(cfg, paths, dataset, manifest);
            stage_train_encoder(cfg, paths, manifest);
            stage_train_rqvae(cfg, paths, manifest);
            stage_group(cfg, paths, manifest);
            stage_profile(cfg, paths, manifest);
            stage_bootstrap(cfg, paths, manifest);
            stage_pco_run(cfg, paths, manifest);
            MetricReport report = stage_eval(cfg, paths, manifest);
            std::fputs(metric_csv(report).c_str(), stdout);
        }
        return 0;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    } catch (const BackendError& e) {
        std::fprintf(stderr, "backend error%s: %s\n", e.retryable ? " (retryable)" : "",
                     e.what());
        return 3;
    }
}
