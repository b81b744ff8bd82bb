#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "liberty/dgp.hpp"
#include "liberty/render.hpp"

namespace liberty {

inline constexpr int kSchemaVersion = 1;

// One generated record: factual world plus zero or more structural
// counterfactuals sharing its exogenous record.
struct Counterfactual {
    ConceptChange change;
    ConceptAssignment assignment;
    std::string text;

    bool operator==(const Counterfactual&) const = default;
};

struct Example {
    std::string id;  // sha256("<dataset>|<seed>|<split>|<index>") prefix
    std::string dataset;
    std::string split;
    std::uint64_t index = 0;
    ExogenousRecord exogenous;
    ConceptAssignment assignment;
    std::string text;
    std::string renderer_id;
    std::vector<Counterfactual> counterfactuals;

    bool operator==(const Example&) const = default;
};

// A factual/counterfactual text pair for one concept change, the unit the
// explainers and metrics consume.
struct InterventionalPair {
    std::string example_id;
    ConceptChange change;
    std::string factual_text;
    std::string counterfactual_text;
    ConceptAssignment factual;
    ConceptAssignment counterfactual;
};

struct GenerationOptions {
    std::uint64_t seed = 0;
    std::string split = "train";
    std::size_t count = 0;
    std::size_t counterfactuals_per_example = 3;
    std::size_t jobs = 1;
    // render with the deterministic renderer by default; callers may swap in
    // an LLM-backed renderer keyed by the same cache
    std::function<RenderedText(const DgpBundle&, const ConceptAssignment&,
                               const std::string& persona_id, const std::string& template_id)>
        renderer;
};

std::string example_id(const std::string& dataset, std::uint64_t seed, const std::string& split,
                       std::uint64_t index);

// Samples `count` exogenous records on disjoint derived streams, evaluates
// the graph, renders, and attaches counterfactuals. Deterministic in
// (bundle, options.seed, split); `jobs` only changes wall time.
std::vector<Example> generate_dataset(const DgpBundle& bundle, const GenerationOptions& options);

// Draws up to n concept changes applicable to the factual assignment
// (uniform without replacement; all of them if fewer than n exist, and
// InsufficientChanges when there are none), then re-propagates each.
void attach_counterfactuals(const DgpBundle& bundle, Example& example, std::size_t n, Rng& rng,
                            const GenerationOptions& options);

std::vector<InterventionalPair> pairs_of(const std::vector<Example>& examples);

// JSONL persistence: a manifest header line, then one example per line.
// Reading rejects schema-version and graph-digest mismatches and reports
// unparsable lines with their line number.
void write_jsonl(const std::string& path, const DgpBundle& bundle,
                 const std::vector<Example>& examples);
std::vector<Example> read_jsonl(const std::string& path, const DgpBundle& bundle);

}  // namespace liberty
