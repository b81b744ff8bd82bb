#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "liberty/errors.hpp"

namespace liberty {

enum class ConceptRole { outcome, concept_var };

struct ConceptValue {
    int code;
    std::string label;
};

struct ConceptSpec {
    std::string name;
    std::vector<ConceptValue> values;  // codes are consecutive, starting at 0
    ConceptRole role = ConceptRole::concept_var;

    int num_codes() const { return static_cast<int>(values.size()); }
    const std::string& label(int code) const;
};

struct EquationTerm {
    enum class Kind { code, indicator };
    std::string parent;
    Kind kind = Kind::code;
    int match_code = 0;  // only for indicator terms
    double weight = 0.0;
};

struct StructuralEquation {
    std::string target;
    std::vector<EquationTerm> terms;
    double intercept = 0.0;
    double noise_mean = 0.0;
    double noise_std = 0.0;
    int clamp_lo = 0;
    int clamp_hi = 0;
};

struct CategoricalPrior {
    std::vector<double> probs;  // indexed by code, sums to 1
};

struct ConceptAssignment {
    std::map<std::string, int> values;
    std::set<std::string> interventions;

    bool operator==(const ConceptAssignment& o) const = default;
};

struct ConceptChange {
    std::string concept_name;
    int from_code = 0;
    int to_code = 0;

    auto operator<=>(const ConceptChange&) const = default;
    std::string key() const;
};

struct ExogenousRecord {
    // one entry per non-deterministic concept: Gaussian draw for
    // equation-bearing concepts, uniform in [0,1) for categorical roots
    std::map<std::string, double> noise;
    std::string persona_id;
    std::string template_id;
    std::uint64_t seed = 0;

    bool operator==(const ExogenousRecord& o) const = default;
};

// Validated SCM over discrete concepts. Immutable after validate_graph();
// safe to share across threads.
class ScmGraph {
public:
    const std::string& name() const { return name_; }
    const std::vector<ConceptSpec>& concepts() const { return concepts_; }
    const std::vector<std::pair<std::string, std::string>>& edges() const { return edges_; }
    const std::vector<std::string>& topological_order() const { return topo_order_; }
    bool outcome_in_change_set() const { return outcome_in_change_set_; }

    const ConceptSpec& concept_spec(const std::string& name) const;
    bool has_concept(const std::string& name) const { return index_.count(name) > 0; }
    const std::string& outcome() const { return outcome_; }
    bool is_root(const std::string& name) const { return priors_.count(name) > 0; }
    const StructuralEquation& equation(const std::string& name) const;
    const CategoricalPrior& prior(const std::string& name) const;
    const std::set<std::string>& parents(const std::string& name) const;

    // canonical-JSON digest; identifies the graph in manifests
    const std::string& digest() const { return digest_; }
    nlohmann::json to_json() const;

    friend ScmGraph validate_graph(const nlohmann::json& spec);

    // fast indexed evaluation, used by the Monte-Carlo true-effect estimator
    std::size_t index_of(const std::string& name) const;
    std::vector<int> evaluate_indexed(const std::vector<double>& noise,
                                      const std::vector<int>& forced) const;  // forced: -1 = free

private:
    struct CompiledTerm {
        std::size_t parent;
        bool indicator;
        int match_code;
        double weight;
    };
    struct CompiledNode {
        bool is_root = false;
        std::vector<double> cdf;  // roots
        std::vector<CompiledTerm> terms;
        double intercept = 0.0;
        int clamp_lo = 0, clamp_hi = 0;
    };

    void compile();

    std::string name_;
    std::vector<ConceptSpec> concepts_;
    std::vector<std::pair<std::string, std::string>> edges_;
    std::map<std::string, StructuralEquation> equations_;
    std::map<std::string, CategoricalPrior> priors_;
    std::map<std::string, std::set<std::string>> parents_;
    std::vector<std::string> topo_order_;
    std::map<std::string, std::size_t> index_;       // concept -> declaration index
    std::vector<std::size_t> topo_indices_;
    std::vector<CompiledNode> compiled_;             // by declaration index
    std::string outcome_;
    std::string digest_;
    bool outcome_in_change_set_ = false;
};

ScmGraph validate_graph(const nlohmann::json& spec);
ScmGraph validate_graph_from_string(const std::string& json_text);

// Deterministic function of (graph, seed). Pool ids are drawn uniformly.
ExogenousRecord sample_exogenous(const ScmGraph& graph, std::uint64_t seed,
                                 const std::vector<std::string>& persona_ids,
                                 const std::vector<std::string>& template_ids);

ConceptAssignment evaluate(const ScmGraph& graph, const ExogenousRecord& exo,
                           const std::map<std::string, int>& interventions = {});

ConceptAssignment counterfactual_assignment(const ScmGraph& graph, const ExogenousRecord& exo,
                                            const ConceptChange& change);

// All ordered (from, to) pairs for one concept, or for every concept.
// The outcome concept is skipped in the "all" form unless the graph opts in.
std::vector<ConceptChange> enumerate_changes(const ScmGraph& graph,
                                             const std::optional<std::string>& concept_name = {});

std::set<std::string> ancestors(const ScmGraph& graph, const std::string& concept_name);
std::set<std::string> descendants(const ScmGraph& graph, const std::string& concept_name);

// "round" as used by the structural equations: half away from zero.
inline double round_half_away(double x) { return std::round(x); }

nlohmann::json exo_to_json(const ExogenousRecord& exo);
ExogenousRecord exo_from_json(const nlohmann::json& j);
nlohmann::json assignment_to_json(const ConceptAssignment& a);
ConceptAssignment assignment_from_json(const nlohmann::json& j);

}  // namespace liberty
