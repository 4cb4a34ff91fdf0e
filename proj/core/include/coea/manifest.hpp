#pragma once

#include <map>
#include <string>
#include <vector>

namespace coea {

// Run manifest: the config digest plus, per pipeline stage, digests of every
// input and output artifact. Wall-clock timings are kept out of the manifest
// bytes (they land in timings.json next to it) so that reruns with equal
// inputs produce byte-identical manifests.

struct StageEntry {
    std::string stage;
    std::map<std::string, std::string> inputs;   // artifact name -> digest
    std::map<std::string, std::string> outputs;  // artifact name -> digest
};

class Manifest {
public:
    Manifest() = default;
    // Loads `path` when it exists; a fresh manifest otherwise.
    static Manifest open(const std::string& path);

    void set_config_digest(const std::string& digest) { config_digest_ = digest; }
    const std::string& config_digest() const { return config_digest_; }

    // Upsert by stage name.
    void record(const StageEntry& entry);
    const StageEntry* find(const std::string& stage) const;

    void record_timing(const std::string& stage, double seconds);

    // Canonical serialization: stages sorted by name. Timings, when any were
    // recorded, go to `timings_path` (defaults to "<path minus .json>.timings.json"
    // handled by the caller passing an explicit path).
    void save(const std::string& path) const;
    void save_timings(const std::string& path) const;
    std::string serialize() const;

private:
    std::string config_digest_;
    std::vector<StageEntry> stages_;
    std::map<std::string, double> timings_;
};

}  // namespace coea
