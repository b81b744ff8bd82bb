#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "liberty/adapters.hpp"
#include "liberty/pipeline.hpp"

namespace liberty {

struct ExplanationVector {
    std::vector<double> delta;  // over Y classes, sums to 0
    std::string method_id;
    ConceptChange change;
    std::string example_id;
};

// One candidate text with everything an explainer might match on.
struct Candidate {
    std::string id;
    std::string text;
    ConceptAssignment assignment;        // predicted (argmax) or gold codes
    ConceptPrediction concept_probs;     // per-concept simplices
    std::vector<double> embedding;
    PredictionVector prediction;         // explained model's f(text)
};

// Immutable after build; indexed by (concept, code) for fast filtering.
class CandidatePool {
public:
    CandidatePool(const DgpBundle& bundle, std::vector<Candidate> candidates);

    const std::vector<Candidate>& candidates() const { return candidates_; }
    // indices of candidates whose concept has the given code
    const std::vector<std::size_t>& with(const std::string& concept_name, int code) const;

    static CandidatePool build(const DgpBundle& bundle, const std::vector<Example>& examples,
                               Model& model, ConceptPredictor& predictor, Embedder& embedder);

private:
    const DgpBundle& bundle_;
    std::vector<Candidate> candidates_;
    std::map<std::pair<std::string, int>, std::vector<std::size_t>> by_value_;
    std::vector<std::size_t> empty_;
};

// Query-side view of the example being explained.
struct QueryPoint {
    std::string example_id;
    std::string text;
    ConceptAssignment assignment;
    ConceptPrediction concept_probs;
    std::vector<double> embedding;
    PredictionVector prediction;
};

ExplanationVector explain_semantic_match(const CandidatePool& pool, const QueryPoint& x,
                                         const ConceptChange& change,
                                         const std::string& provider_id, std::size_t k = 3);

ExplanationVector explain_approx(const CandidatePool& pool, const QueryPoint& x,
                                 const ConceptChange& change, std::uint64_t seed,
                                 std::size_t k = 3);

ExplanationVector explain_convecs(const CandidatePool& pool, const QueryPoint& x,
                                  const ConceptChange& change, std::size_t k = 3);

enum class CfStrategy { only_change, fix_all, fix_confounders, mediators_confounders };

CfStrategy parse_strategy(const std::string& name);
std::string strategy_name(CfStrategy s);

std::string build_cf_prompt(CfStrategy strategy, const DgpBundle& bundle, const std::string& text,
                            const ConceptChange& change);

// Produces the edited counterfactual text for a (text, change) request.
class CounterfactualGenerator {
public:
    virtual ~CounterfactualGenerator() = default;
    virtual std::string generate(const DgpBundle& bundle, const std::string& text,
                                 const ConceptChange& change, CfStrategy strategy) = 0;
    virtual std::string id() const = 0;
};

// Remote LLM editor with on-disk cache keyed by (strategy, text digest, change).
class LlmCfGenerator : public CounterfactualGenerator {
public:
    LlmCfGenerator(LlmEndpoint endpoint, std::string cache_dir);
    std::string generate(const DgpBundle& bundle, const std::string& text,
                         const ConceptChange& change, CfStrategy strategy) override;
    std::string id() const override { return "cfgen-llm/" + endpoint_.model; }

private:
    LlmEndpoint endpoint_;
    RenderCache cache_;
};

// Closed-loop stub: looks the text up in a generated dataset, applies the
// true structural edit to its exogenous record, and re-renders
// deterministically.
class StructuralCfGenerator : public CounterfactualGenerator {
public:
    explicit StructuralCfGenerator(const std::vector<Example>& examples);
    std::string generate(const DgpBundle& bundle, const std::string& text,
                         const ConceptChange& change, CfStrategy strategy) override;
    std::string id() const override { return "cfgen-structural"; }

private:
    std::map<std::string, ExogenousRecord> by_digest_;
};

ExplanationVector explain_cfgen(CounterfactualGenerator& generator, Model& model,
                                const DgpBundle& bundle, const QueryPoint& x,
                                const ConceptChange& change, CfStrategy strategy);

}  // namespace liberty
