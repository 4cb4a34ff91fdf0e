#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "coea/checkpoint.hpp"
#include "coea/config.hpp"
#include "coea/encoder.hpp"
#include "coea/eval.hpp"
#include "coea/gateway.hpp"
#include "coea/grouping.hpp"
#include "coea/ingest.hpp"
#include "coea/manifest.hpp"
#include "coea/pco.hpp"
#include "coea/quantizer.hpp"
#include "coea/store.hpp"
#include "coea/synthetic.hpp"

namespace coea {

// Stage orchestration shared by the CLI and the end-to-end tests. Every stage
// validates its input artifacts (UsageError naming the producing verb), seeds
// its randomness by forking the run seed with the stage name (so verbs are
// idempotent and order-independent), writes its outputs atomically, and
// records digests plus timing in the run manifest.

struct RunPaths {
    std::string out_dir;

    std::string data_dir() const { return out_dir + "/data"; }
    std::string artifacts_dir() const { return out_dir + "/artifacts"; }
    std::string reports_dir() const { return out_dir + "/reports"; }

    std::string config_path() const { return out_dir + "/config.ini"; }
    std::string manifest_path() const { return out_dir + "/manifest.json"; }
    std::string timings_path() const { return out_dir + "/timings.json"; }
    std::string lock_path() const { return out_dir + "/.lock"; }

    std::string ingest_path() const { return artifacts_dir() + "/ingest.json"; }
    std::string encoder_path() const { return artifacts_dir() + "/encoder.json"; }
    std::string representations_path() const { return artifacts_dir() + "/representations.json"; }
    std::string rqvae_path() const { return artifacts_dir() + "/rqvae.json"; }
    std::string csids_path() const { return artifacts_dir() + "/csids.json"; }
    std::string groups_path() const { return artifacts_dir() + "/groups.json"; }
    std::string profiles_path() const { return artifacts_dir() + "/profiles.json"; }
    std::string policy_path() const { return artifacts_dir() + "/policy.json"; }
    std::string reward_path() const { return artifacts_dir() + "/reward.json"; }
    std::string policy_pco_path() const { return artifacts_dir() + "/policy_pco.json"; }
    std::string reward_pco_path() const { return artifacts_dir() + "/reward_pco.json"; }
    std::string store_path() const { return artifacts_dir() + "/store.jsonl"; }

    std::string cycles_csv_path() const { return reports_dir() + "/cycles.csv"; }
    std::string metrics_csv_path() const { return reports_dir() + "/metrics.csv"; }
    std::string per_user_tsv_path() const { return reports_dir() + "/per_user.tsv"; }
    std::string similarity_csv_path() const { return reports_dir() + "/similarity.csv"; }
    std::string store_tsv_path() const { return reports_dir() + "/store.tsv"; }
    std::string groups_tsv_path() const { return reports_dir() + "/groups.tsv"; }
    std::string ablation_csv_path() const { return reports_dir() + "/ablation.csv"; }
};

// Exclusive-create lock file; a live lock makes the constructor throw
// UsageError naming the path.
class RunLock {
public:
    explicit RunLock(const std::string& path);
    ~RunLock();
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    std::string path_;
};

// Model containers as JSON (full round-trip precision).
Json encoder_to_json(const EncoderParams& p);
EncoderParams encoder_from_json(const Json& j);
Json rqvae_to_json(const RqVaeParams& p);
RqVaeParams rqvae_from_json(const Json& j);
Json policy_to_json(const NoveltyPolicy& p);
NoveltyPolicy policy_from_json(const Json& j);
Json reward_to_json(const RewardModel& m);
RewardModel reward_from_json(const Json& j);

// Dataset bundle produced by `ingest`: train-window sequences plus the
// category catalog and test-window ground truth.
struct IngestArtifact {
    Vocab categories;
    std::map<ItemId, std::string> item_category;
    std::map<UserId, UserAttributes> attributes;
    std::map<UserId, UserSequence> sequences;  // train window, long/short split
    std::map<UserId, std::set<std::string>> test_categories;
};

Json ingest_to_json(const IngestArtifact& a);
IngestArtifact ingest_from_json(const Json& j);

// Chronological train-window category sequence of one user.
std::vector<std::string> train_category_seq(const UserSequence& seq,
                                            const std::map<ItemId, std::string>& catalog);

void stage_synth(const RunConfig& cfg, const RunPaths& paths, Manifest& manifest);
void stage_ingest(const RunConfig& cfg, const RunPaths& paths, const std::string& dataset_dir,
                  Manifest& manifest);
void stage_train_encoder(const RunConfig& cfg, const RunPaths& paths, Manifest& manifest);
void stage_train_rqvae(const RunConfig& cfg, const RunPaths& paths, Manifest& manifest);
void stage_group(const RunConfig& cfg, const RunPaths& paths, Manifest& manifest);
void stage_profile(const RunConfig& cfg, const RunPaths& paths, Manifest& manifest);
void stage_bootstrap(const RunConfig& cfg, const RunPaths& paths, Manifest& manifest);
void stage_pco_run(const RunConfig& cfg, const RunPaths& paths, Manifest& manifest);
MetricReport stage_eval(const RunConfig& cfg, const RunPaths& paths, Manifest& manifest);

struct QueryResult {
    std::string key;           // key actually answered (primary or fallback)
    bool fallback = false;     // answered by the default CSID
    std::optional<StoreRecord> record;
};

QueryResult query_user(const RunPaths& paths, const UserId& user);

void stage_export(const RunPaths& paths, Manifest& manifest);
void stage_compact(const RunPaths& paths, Manifest& manifest);

// synth (when dataset_dir is empty) -> ingest -> train-encoder -> train-rqvae
// -> group -> profile -> bootstrap -> pco-run -> eval.
MetricReport run_full_pipeline(const RunConfig& cfg, const std::string& out_dir,
                               const std::string& dataset_dir = "");

}  // namespace coea
