#include "coea/manifest.hpp"

#include <algorithm>
#include <filesystem>

#include "coea/checkpoint.hpp"
#include "coea/errors.hpp"

namespace coea {

Manifest Manifest::open(const std::string& path) {
    Manifest m;
    if (!std::filesystem::exists(path)) return m;
    Json j = read_json_file(path);
    if (!j.is_object()) throw DataError(path + ": manifest must be a json object");
    m.config_digest_ = j.value("config_digest", std::string());
    if (j.contains("stages")) {
        for (const auto& sj : j.at("stages")) {
            StageEntry e;
            e.stage = sj.at("stage").get<std::string>();
            // .items() on a temporary dangles; bind the json first.
            Json inputs = sj.value("inputs", Json::object());
            for (const auto& [k, v] : inputs.items()) {
                e.inputs[k] = v.get<std::string>();
            }
            Json outputs = sj.value("outputs", Json::object());
            for (const auto& [k, v] : outputs.items()) {
                e.outputs[k] = v.get<std::string>();
            }
            m.stages_.push_back(std::move(e));
        }
    }
    return m;
}

void Manifest::record(const StageEntry& entry) {
    for (auto& s : stages_) {
        if (s.stage == entry.stage) {
            s = entry;
            return;
        }
    }
    stages_.push_back(entry);
}

const StageEntry* Manifest::find(const std::string& stage) const {
    for (const auto& s : stages_) {
        if (s.stage == stage) return &s;
    }
    return nullptr;
}

void Manifest::record_timing(const std::string& stage, double seconds) {
    timings_[stage] = seconds;
}

std::string Manifest::serialize() const {
    Json j;
    j["config_digest"] = config_digest_;
    std::vector<StageEntry> sorted = stages_;
    std::sort(sorted.begin(), sorted.end(),
              [](const StageEntry& a, const StageEntry& b) { return a.stage < b.stage; });
    j["stages"] = Json::array();
    for (const auto& s : sorted) {
        Json sj;
        sj["stage"] = s.stage;
        sj["inputs"] = Json::object();
        for (const auto& [k, v] : s.inputs) sj["inputs"][k] = v;
        sj["outputs"] = Json::object();
        for (const auto& [k, v] : s.outputs) sj["outputs"][k] = v;
        j["stages"].push_back(std::move(sj));
    }
    return j.dump(2) + "\n";
}

void Manifest::save(const std::string& path) const { write_text_file(path, serialize()); }

void Manifest::save_timings(const std::string& path) const {
    Json j = Json::object();
    for (const auto& [stage, seconds] : timings_) j[stage] = seconds;
    write_text_file(path, j.dump(2) + "\n");
}

}  // namespace coea
