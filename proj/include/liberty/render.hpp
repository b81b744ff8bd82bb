#pragma once

#include <condition_variable>
#include <functional>
#include <mutex>
#include <optional>
#include <set>
#include <string>

#include "liberty/dgp.hpp"

namespace liberty {

struct RenderedText {
    std::string text;
    std::string renderer_id;
    std::string prompt_hash;  // 256-bit digest, hex
    bool cache_hit = false;

    bool operator==(const RenderedText&) const = default;
};

inline constexpr const char* kDeterministicRendererId = "deterministic/v1";

// Cache key covers everything the output depends on: bundle, full assignment,
// grounding ids, renderer and prompt-template version.
std::string render_cache_key(const DgpBundle& bundle, const ConceptAssignment& assignment,
                             const std::string& persona_id, const std::string& template_id,
                             const std::string& renderer_id);

// Fills the template's slots with verbalized concept values and the persona
// body. Every concept value appears exactly once as "[Concept: Label]" so the
// assignment is machine-recoverable from the text.
RenderedText render_deterministic(const DgpBundle& bundle, const ConceptAssignment& assignment,
                                  const GroundingAsset& persona, const GroundingAsset& tmpl);

// Inverse of the deterministic renderer's marker grammar.
ConceptAssignment recover_assignment(const DgpBundle& bundle, const std::string& text);
// Markers present in the text, without requiring completeness.
std::map<std::string, int> recover_markers(const DgpBundle& bundle, const std::string& text);

std::string build_generation_prompt(const DgpBundle& bundle, const ConceptAssignment& assignment,
                                    const GroundingAsset& persona, const GroundingAsset& tmpl);

struct LlmEndpoint {
    std::string base_url;  // e.g. http://localhost:8080
    std::string model;
    std::string api_key_env = "LIBERTY_API_KEY";
    int max_retries = 3;
    int initial_backoff_ms = 250;
};

// On-disk content-addressed cache: <dir>/<dataset>/<hash>.txt plus a manifest
// recording renderer_id and prompt-template version. Writes are serialized per
// key and a given key is computed at most once, even under concurrency.
class RenderCache {
public:
    explicit RenderCache(std::string dir) : dir_(std::move(dir)) {}

    std::optional<std::string> get(const std::string& dataset, const std::string& hash) const;
    void put(const std::string& dataset, const std::string& hash, const std::string& text,
             const std::string& renderer_id, const std::string& prompt_version);
    std::string get_or_compute(const std::string& dataset, const std::string& hash,
                               const std::string& renderer_id, const std::string& prompt_version,
                               const std::function<std::string()>& compute);
    const std::string& dir() const { return dir_; }

private:
    std::string dir_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::set<std::string> inflight_;
};

// Single chat-completion request against an OpenAI-compatible endpoint, with
// bounded exponential backoff on transient failures. Temperature must be 0.
std::string chat_completion(const LlmEndpoint& endpoint, const std::string& system_prompt,
                            const std::string& user_prompt, double temperature);

RenderedText render_llm(const LlmEndpoint& endpoint, const DgpBundle& bundle,
                        const ConceptAssignment& assignment, const GroundingAsset& persona,
                        const GroundingAsset& tmpl, RenderCache& cache, double temperature = 0.0);

}  // namespace liberty
