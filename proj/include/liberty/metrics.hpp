#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "liberty/explainers.hpp"

namespace liberty {

struct IcaceVector {
    std::vector<double> delta;
    std::string example_id;
    ConceptChange change;
};

struct ErrorDistance {
    double cosine = 0.0;
    double l2 = 0.0;
    double norm_diff = 0.0;
    double mean = 0.0;
};

IcaceVector icace(const PredictionVector& f_x, const PredictionVector& f_cf);

// mean over examples of f(counterfactual to c') − f(counterfactual to c)
std::vector<double> cace_empirical(const std::vector<PredictionVector>& to_second,
                                   const std::vector<PredictionVector>& to_first);

ErrorDistance error_distance(const std::vector<double>& ref, const std::vector<double>& expl);

double local_of(const std::vector<double>& ref1, const std::vector<double>& ref2,
                const std::vector<double>& expl1, const std::vector<double>& expl2);

struct LocalAggregate {
    double ed_bar = 0.0;
    std::optional<double> of_bar;  // absent with fewer than two changes
    std::size_t tie_count = 0;     // zero entries hit by the sign comparison
    std::size_t change_count = 0;
    std::size_t pair_count = 0;    // non-empty ordered change pairs
};

// refs and expls are keyed per (example, change); every ref needs a matching
// explanation.
LocalAggregate aggregate_local(const std::vector<IcaceVector>& refs,
                               const std::vector<ExplanationVector>& expls);

// score(C) = mean over C's changes of the abs-sum of the change's CaCE
std::map<std::string, double> global_importance(
    const std::map<std::string, std::vector<std::vector<double>>>& caces_by_concept);

double global_of(const std::map<std::string, double>& gold_scores,
                 const std::map<std::string, double>& method_scores);

// mean abs-sum of the given ICaCE vectors
double sensitivity(const std::vector<IcaceVector>& icaces);

enum class TrueEffectKind { individual, population };

// Monte-Carlo estimate of the concept's true effect on Y.
double true_effect_mc(const ScmGraph& graph, const std::string& concept_name,
                      std::size_t n_samples, std::uint64_t seed,
                      TrueEffectKind kind = TrueEffectKind::individual);

struct MethodResult {
    std::string method_id;
    LocalAggregate local;
    std::map<std::string, double> importance;
    double global_of = 0.0;
};

struct EvaluationReport {
    std::string dataset;
    std::string model_id;
    std::string graph_digest;
    std::vector<MethodResult> methods;
    std::map<std::string, double> gold_importance;
    std::map<std::string, double> sensitivities;          // concept -> mean abs-sum ICaCE
    std::map<std::string, std::optional<double>> true_effects;  // absent: not identifiable
};

// report/local.csv, global.csv, sensitivity.csv, true_effects.csv, manifest.json
void write_report(const EvaluationReport& report, const std::string& dir);

}  // namespace liberty
