#include "coea/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "coea/errors.hpp"
#include "coea/rng.hpp"

namespace coea {

namespace {

std::string escape_slot(const std::string& v) {
    std::string out;
    out.reserve(v.size());
    for (char c : v) {
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case ']': out += "\\]"; break;
            default: out += c;
        }
    }
    return out;
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::string substitute(const std::string& tmpl, const std::map<std::string, std::string>& slots) {
    std::string out;
    size_t pos = 0;
    while (pos < tmpl.size()) {
        size_t open = tmpl.find('{', pos);
        if (open == std::string::npos) {
            out += tmpl.substr(pos);
            break;
        }
        size_t close = tmpl.find('}', open);
        if (close == std::string::npos) {
            out += tmpl.substr(pos);
            break;
        }
        out += tmpl.substr(pos, open - pos);
        std::string name = tmpl.substr(open + 1, close - open - 1);
        auto it = slots.find(name);
        if (it == slots.end()) throw UsageError("missing slot: " + name);
        out += escape_slot(it->second);
        pos = close + 1;
    }
    return out;
}

const char* kProfileTemplate =
    "You are an expert analyst of user interests on a recommendation platform.\n"
    "Representative member histories: [{profile}]\n"
    "Categories seen across members: [{categories}]\n"
    "Instruction: write one concise sentence describing this group's shared "
    "long-term interests.";

const char* kNoveltyFtTemplate =
    "You are a category recommendation assistant.\n"
    "Group profile: [{profile}]\n"
    "Recent categories: [{categories}]\n"
    "Instruction: predict the category this user clicks next.";

const char* kNoveltyInferTemplate =
    "You are a category recommendation assistant.\n"
    "Group profile: [{profile}]\n"
    "Recent categories: [{categories}]\n"
    "Instruction: predict the category this user clicks next.\n"
    "Novelty trigger: propose categories the user has not engaged with recently, "
    "one per line.";

const char* kRelevanceFtTemplate =
    "You are a relevance judge for a recommendation platform.\n"
    "Group profile: [{profile}]\n"
    "Recent categories: [{categories}]\n"
    "Candidate category: [{candidate}]\n"
    "Instruction: state whether the user would engage with the candidate.";

const char* kRelevanceInferTemplate =
    "You are a relevance judge for a recommendation platform.\n"
    "Group profile: [{profile}]\n"
    "Recent categories: [{categories}]\n"
    "Candidate category: [{candidate}]\n"
    "Instruction: score the candidate's relevance to this user as a single real "
    "number.";

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

const char* prompt_role_name(PromptRole role) {
    switch (role) {
        case PromptRole::profile: return "profile";
        case PromptRole::novelty_ft: return "novelty_ft";
        case PromptRole::novelty_infer: return "novelty_infer";
        case PromptRole::relevance_ft: return "relevance_ft";
        case PromptRole::relevance_infer: return "relevance_infer";
    }
    return "unknown";
}

PromptTemplates PromptTemplates::builtin() {
    PromptTemplates t;
    t.templates_[PromptRole::profile] = kProfileTemplate;
    t.templates_[PromptRole::novelty_ft] = kNoveltyFtTemplate;
    t.templates_[PromptRole::novelty_infer] = kNoveltyInferTemplate;
    t.templates_[PromptRole::relevance_ft] = kRelevanceFtTemplate;
    t.templates_[PromptRole::relevance_infer] = kRelevanceInferTemplate;
    return t;
}

PromptTemplates PromptTemplates::load_dir(const std::string& dir) {
    PromptTemplates t = builtin();
    for (auto role : {PromptRole::profile, PromptRole::novelty_ft, PromptRole::novelty_infer,
                      PromptRole::relevance_ft, PromptRole::relevance_infer}) {
        std::filesystem::path p = std::filesystem::path(dir) /
                                  (std::string(prompt_role_name(role)) + ".txt");
        std::ifstream in(p, std::ios::binary);
        if (!in) continue;
        std::ostringstream ss;
        ss << in.rdbuf();
        std::string text = ss.str();
        while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
        t.templates_[role] = text;
    }
    return t;
}

RenderedPrompt PromptTemplates::render(PromptRole role, const std::string& profile_text,
                                       const std::vector<std::string>& categories,
                                       const std::optional<std::string>& candidate) const {
    bool is_ft = role == PromptRole::novelty_ft || role == PromptRole::relevance_ft;
    bool is_relevance = role == PromptRole::relevance_ft || role == PromptRole::relevance_infer;

    if (profile_text.empty()) throw UsageError("missing slot: profile");
    if (is_relevance && !candidate) throw UsageError("missing slot: candidate");

    std::vector<std::string> window = categories;
    if (is_ft && window.size() != 2)
        throw UsageError("missing slot: categories (fine-tuning roles take exactly two)");
    if (!is_ft && window.size() > 2) window.erase(window.begin(), window.end() - 2);
    if (role != PromptRole::profile && window.empty())
        throw UsageError("missing slot: categories");

    RenderedPrompt out;
    out.role = role;
    out.slots["profile"] = profile_text;
    out.slots["categories"] = join(window, ", ");
    if (candidate) out.slots["candidate"] = *candidate;
    out.text = substitute(templates_.at(role), out.slots);
    return out;
}

SimulatedBackend::SimulatedBackend(const NoveltyPolicy* policy, const RewardModel* reward,
                                   uint64_t seed)
    : policy_(policy), reward_(reward), seed_(seed) {}

std::string SimulatedBackend::profile(
    const RenderedPrompt&, const std::vector<std::vector<std::string>>& rep_category_seqs) {
    std::map<std::string, size_t> freq;
    for (const auto& seq : rep_category_seqs)
        for (const auto& cat : seq) ++freq[cat];
    if (freq.empty()) throw DataError("profile generation needs non-empty sequences");
    std::vector<std::pair<std::string, size_t>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> top;
    for (size_t i = 0; i < ranked.size() && i < 3; ++i) top.push_back(ranked[i].first);
    return "Group members share a stable long-term interest in " + join(top, ", ") + ".";
}

CandidateSet SimulatedBackend::candidates(const RenderedPrompt& prompt,
                                          const CandidateQuery& query) {
    if (!policy_) throw BackendError("simulated backend has no novelty policy", false);
    std::vector<char> barred(policy_->categories.size(), 0);
    for (int c : query.excluded) {
        if (c < 0 || static_cast<size_t>(c) >= barred.size())
            throw DataError("excluded category id out of range");
        barred[static_cast<size_t>(c)] = 1;
    }
    std::vector<int> allowed;
    for (size_t c = 0; c < barred.size(); ++c)
        if (!barred[c]) allowed.push_back(static_cast<int>(c));

    CandidateSet out;
    if (allowed.empty()) {
        out.truncated = true;
        return out;
    }
    Rng rng(seed_ ^ fnv1a64(prompt.text));
    auto ids = policy_sample_without_replacement(*policy_, query.context, allowed,
                                                 query.m_cand, rng);
    for (int id : ids) out.categories.push_back(policy_->categories.name(id));
    out.truncated = out.categories.size() < query.m_cand;
    return out;
}

double SimulatedBackend::score(const RenderedPrompt&, const PolicyContext& ctx, int category) {
    if (!reward_) throw BackendError("simulated backend has no reward model", false);
    return reward_score(*reward_, ctx, category);
}

HttpBackend::HttpBackend(HttpBackendConfig cfg, Vocab categories)
    : cfg_(std::move(cfg)), categories_(std::move(categories)) {}

std::string HttpBackend::profile(const RenderedPrompt& prompt,
                                 const std::vector<std::vector<std::string>>&) {
    std::string text = trim(complete(prompt.text));
    if (text.empty()) throw BackendError("backend returned an empty profile", true);
    return text;
}

CandidateSet HttpBackend::candidates(const RenderedPrompt& prompt, const CandidateQuery& query) {
    std::map<std::string, std::string> by_lower;
    for (const auto& name : categories_.names()) by_lower.emplace(lower(name), name);
    std::vector<char> barred(categories_.size(), 0);
    for (int c : query.excluded)
        if (c >= 0 && static_cast<size_t>(c) < barred.size()) barred[static_cast<size_t>(c)] = 1;

    CandidateSet out;
    std::istringstream lines(complete(prompt.text));
    std::string line;
    std::set<std::string> seen;
    while (std::getline(lines, line) && out.categories.size() < query.m_cand) {
        std::string name = trim(line);
        if (name.empty()) continue;
        auto it = by_lower.find(lower(name));
        if (it == by_lower.end()) {
            ++dropped_lines_;
            continue;
        }
        int id = categories_.index_of(it->second);
        if (id >= 0 && barred[static_cast<size_t>(id)]) continue;
        if (seen.insert(it->second).second) out.categories.push_back(it->second);
    }
    out.truncated = out.categories.size() < query.m_cand;
    return out;
}

double HttpBackend::score(const RenderedPrompt& prompt, const PolicyContext&, int) {
    std::string text = complete(prompt.text);
    // First real number in the reply is the raw score.
    size_t i = text.find_first_of("+-0123456789.");
    while (i != std::string::npos) {
        char* end = nullptr;
        double v = std::strtod(text.c_str() + i, &end);
        if (end != text.c_str() + i) {
            if (!std::isfinite(v)) throw DataError("backend returned a non-finite score");
            return v;
        }
        i = text.find_first_of("+-0123456789.", i + 1);
    }
    throw BackendError("no numeric score in backend reply", false);
}

std::string HttpBackend::complete(const std::string& prompt_text) {
    // Split scheme://host[:port]/path by hand; httplib clients take the
    // origin and the request path separately.
    size_t scheme_end = cfg_.url.find("://");
    if (scheme_end == std::string::npos) throw UsageError("backend url needs a scheme: " + cfg_.url);
    size_t path_start = cfg_.url.find('/', scheme_end + 3);
    std::string origin = path_start == std::string::npos ? cfg_.url
                                                         : cfg_.url.substr(0, path_start);
    std::string path = path_start == std::string::npos ? "/" : cfg_.url.substr(path_start);

    nlohmann::json body;
    body["model"] = cfg_.model;
    body["messages"] = nlohmann::json::array(
        {nlohmann::json{{"role", "user"}, {"content", prompt_text}}});
    body["temperature"] = cfg_.temperature;
    std::string payload = body.dump();

    httplib::Client client(origin);
    client.set_connection_timeout(cfg_.timeout_sec, 0);
    client.set_read_timeout(cfg_.timeout_sec, 0);
    httplib::Headers headers;
    if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
        headers.emplace("Authorization", std::string("Bearer ") + key);

    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
        if (attempt > 0)
            std::this_thread::sleep_for(
                std::chrono::milliseconds(cfg_.backoff_ms * (1 << (attempt - 1))));
        auto res = client.Post(path, headers, payload, "application/json");
        if (!res) {
            last_error = "transport failure: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "retryable status " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200)
            throw BackendError("backend status " + std::to_string(res->status), false);
        auto j = nlohmann::json::parse(res->body, nullptr, false);
        if (j.is_discarded()) throw BackendError("backend returned invalid json", false);
        try {
            const auto& choice = j.at("choices").at(0);
            if (choice.contains("message")) return choice.at("message").at("content");
            return choice.at("text");
        } catch (const nlohmann::json::exception&) {
            throw BackendError("backend reply missing choices[0] content", false);
        }
    }
    throw BackendError("backend unreachable after retries: " + last_error, true);
}

std::string generate_profile(LlmBackend& backend, const PromptTemplates& templates,
                             const std::vector<std::vector<std::string>>& rep_category_seqs) {
    if (rep_category_seqs.empty()) throw DataError("profile generation needs non-empty sequences");
    std::vector<std::string> seq_texts;
    std::vector<std::string> cats;
    std::set<std::string> seen;
    for (const auto& seq : rep_category_seqs) {
        if (seq.empty()) continue;
        std::string t;
        for (size_t i = 0; i < seq.size(); ++i) {
            if (i) t += " > ";
            t += seq[i];
            if (seen.insert(seq[i]).second) cats.push_back(seq[i]);
        }
        seq_texts.push_back(std::move(t));
    }
    if (seq_texts.empty()) throw DataError("profile generation needs non-empty sequences");
    RenderedPrompt prompt = templates.render(PromptRole::profile, join(seq_texts, " | "), cats);
    std::string text = backend.profile(prompt, rep_category_seqs);
    if (text.empty()) throw DataError("empty profile text");
    return text;
}

CandidateSet generate_candidates(LlmBackend& backend, const RenderedPrompt& prompt,
                                 const CandidateQuery& query) {
    if (prompt.role != PromptRole::novelty_infer)
        throw UsageError("generate_candidates requires a novelty_infer prompt");
    if (query.m_cand == 0) throw UsageError("m_cand must be positive");
    return backend.candidates(prompt, query);
}

double score_candidate(LlmBackend& backend, const RenderedPrompt& prompt,
                       const PolicyContext& ctx, int category) {
    if (prompt.role != PromptRole::relevance_infer)
        throw UsageError("score_candidate requires a relevance_infer prompt");
    double raw = backend.score(prompt, ctx, category);
    if (!std::isfinite(raw)) throw DataError("non-finite candidate score");
    return raw;
}

}  // namespace coea
