#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>

#include "coea/training.hpp"
#include "coea/types.hpp"

namespace coea {

// Uniform interface over the three LLM roles. The simulated backend delegates
// to the trainable novelty policy and reward model, which keeps every loss in
// `training` executable end to end; the http backend speaks a generic
// chat-completions protocol.

enum class PromptRole { profile, novelty_ft, novelty_infer, relevance_ft, relevance_infer };

const char* prompt_role_name(PromptRole role);

struct RenderedPrompt {
    PromptRole role;
    std::string text;
    std::map<std::string, std::string> slots;
};

// Templates are plain text with {profile} / {categories} / {candidate}
// placeholders. Slot values are escaped (backslash, newline, tab and the
// closing bracket) before substitution so distinct values cannot render to
// the same text.
class PromptTemplates {
public:
    static PromptTemplates builtin();
    // Reads <role>.txt per role from `dir`; missing files keep the builtin.
    static PromptTemplates load_dir(const std::string& dir);

    // Fine-tuning roles take exactly the two-category window; inference roles
    // with longer category lists keep the last two. Relevance roles require
    // `candidate`; the profile role interprets `profile_text` as the
    // representative-sequence block. Missing required slots raise UsageError
    // naming the slot.
    RenderedPrompt render(PromptRole role, const std::string& profile_text,
                          const std::vector<std::string>& categories,
                          const std::optional<std::string>& candidate = std::nullopt) const;

private:
    std::map<PromptRole, std::string> templates_;
};

struct CandidateQuery {
    PolicyContext context;
    std::vector<int> excluded;  // category ids barred from generation (C'_short)
    size_t m_cand = 8;
};

struct CandidateSet {
    std::vector<std::string> categories;  // distinct, in vocabulary
    bool truncated = false;  // vocabulary exhausted before reaching m_cand
};

class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual std::string profile(const RenderedPrompt& prompt,
                                const std::vector<std::vector<std::string>>& rep_category_seqs) = 0;
    virtual CandidateSet candidates(const RenderedPrompt& prompt, const CandidateQuery& query) = 0;
    virtual double score(const RenderedPrompt& prompt, const PolicyContext& ctx, int category) = 0;
};

// Deterministic desk-scale backend: profiles from representative-sequence
// category frequencies, candidates sampled from the novelty policy, scores
// from the reward model. Per-call randomness is derived from the seed and the
// prompt text, so results do not depend on call order.
class SimulatedBackend : public LlmBackend {
public:
    SimulatedBackend(const NoveltyPolicy* policy, const RewardModel* reward, uint64_t seed);

    std::string profile(const RenderedPrompt& prompt,
                        const std::vector<std::vector<std::string>>& rep_category_seqs) override;
    CandidateSet candidates(const RenderedPrompt& prompt, const CandidateQuery& query) override;
    double score(const RenderedPrompt& prompt, const PolicyContext& ctx, int category) override;

private:
    const NoveltyPolicy* policy_;
    const RewardModel* reward_;
    uint64_t seed_;
};

struct HttpBackendConfig {
    std::string url;  // full chat-completions endpoint
    std::string model;
    std::string api_key_env = "COEA_API_KEY";
    double temperature = 0.0;
    int timeout_sec = 30;
    int max_retries = 3;
    int backoff_ms = 500;
};

// Generic chat-completions client. Candidate lines are matched against the
// category vocabulary case-insensitively; unmatched lines are dropped and
// counted. The API key is read from the configured env var and never logged.
class HttpBackend : public LlmBackend {
public:
    HttpBackend(HttpBackendConfig cfg, Vocab categories);

    std::string profile(const RenderedPrompt& prompt,
                        const std::vector<std::vector<std::string>>& rep_category_seqs) override;
    CandidateSet candidates(const RenderedPrompt& prompt, const CandidateQuery& query) override;
    double score(const RenderedPrompt& prompt, const PolicyContext& ctx, int category) override;

    size_t dropped_lines() const { return dropped_lines_; }

private:
    std::string complete(const std::string& prompt_text);

    HttpBackendConfig cfg_;
    Vocab categories_;
    size_t dropped_lines_ = 0;
};

// Role-level entry points used by the pipeline; identical call shape for
// either backend.
std::string generate_profile(LlmBackend& backend, const PromptTemplates& templates,
                             const std::vector<std::vector<std::string>>& rep_category_seqs);
CandidateSet generate_candidates(LlmBackend& backend, const RenderedPrompt& prompt,
                                 const CandidateQuery& query);
double score_candidate(LlmBackend& backend, const RenderedPrompt& prompt,
                       const PolicyContext& ctx, int category);

}  // namespace coea
