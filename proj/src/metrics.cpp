#include "liberty/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "liberty/errors.hpp"
#include "liberty/rng.hpp"

namespace liberty {

using nlohmann::json;

namespace {

double l2_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

int sgn(double x) { return (x > 0.0) - (x < 0.0); }

void check_lengths(std::size_t a, std::size_t b) {
    if (a != b)
        throw LengthMismatch("vector lengths differ: " + std::to_string(a) + " vs " +
                             std::to_string(b));
}

}  // namespace

IcaceVector icace(const PredictionVector& f_x, const PredictionVector& f_cf) {
    check_lengths(f_x.probs.size(), f_cf.probs.size());
    std::vector<double> delta(f_x.probs.size());
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = f_cf.probs[i] - f_x.probs[i];
    return {std::move(delta), "", {}};
}

std::vector<double> cace_empirical(const std::vector<PredictionVector>& to_second,
                                   const std::vector<PredictionVector>& to_first) {
    if (to_second.empty() || to_second.size() != to_first.size())
        throw MissingEndpointCounterfactual(
            "need matching counterfactual predictions to both endpoints");
    std::vector<double> out(to_second[0].probs.size(), 0.0);
    for (std::size_t i = 0; i < to_second.size(); ++i) {
        check_lengths(to_second[i].probs.size(), out.size());
        check_lengths(to_first[i].probs.size(), out.size());
        for (std::size_t y = 0; y < out.size(); ++y)
            out[y] += to_second[i].probs[y] - to_first[i].probs[y];
    }
    for (double& x : out) x /= double(to_second.size());
    return out;
}

ErrorDistance error_distance(const std::vector<double>& ref, const std::vector<double>& expl) {
    check_lengths(ref.size(), expl.size());
    ErrorDistance d;
    double nr = l2_norm(ref), ne = l2_norm(expl);
    if (nr == 0.0 && ne == 0.0) {
        d.cosine = 0.0;
    } else if (nr == 0.0 || ne == 0.0) {
        // a zero vector on one side counts as maximally misaligned
        d.cosine = 1.0;
    } else {
        double dot = 0.0;
        for (std::size_t i = 0; i < ref.size(); ++i) dot += ref[i] * expl[i];
        d.cosine = 1.0 - dot / (nr * ne);
    }
    double s = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        double t = ref[i] - expl[i];
        s += t * t;
    }
    d.l2 = std::sqrt(s);
    d.norm_diff = std::abs(nr - ne);
    d.mean = (d.cosine + d.l2 + d.norm_diff) / 3.0;
    return d;
}

double local_of(const std::vector<double>& ref1, const std::vector<double>& ref2,
                const std::vector<double>& expl1, const std::vector<double>& expl2) {
    check_lengths(ref1.size(), ref2.size());
    check_lengths(expl1.size(), expl2.size());
    check_lengths(ref1.size(), expl1.size());
    std::size_t agree = 0;
    for (std::size_t y = 0; y < ref1.size(); ++y)
        if (sgn(ref1[y] - ref2[y]) == sgn(expl1[y] - expl2[y])) ++agree;
    return double(agree) / double(ref1.size());
}

LocalAggregate aggregate_local(const std::vector<IcaceVector>& refs,
                               const std::vector<ExplanationVector>& expls) {
    // index explanations by (example, change)
    std::map<std::pair<std::string, std::string>, const ExplanationVector*> expl_index;
    for (const auto& e : expls) expl_index[{e.example_id, e.change.key()}] = &e;

    std::map<std::string, std::map<std::string, const IcaceVector*>> by_change;  // change -> ex
    for (const auto& r : refs) by_change[r.change.key()][r.example_id] = &r;

    auto expl_for = [&](const std::string& ex, const std::string& change) {
        auto it = expl_index.find({ex, change});
        if (it == expl_index.end())
            throw MissingExplanation("no explanation for example " + ex + " change " + change);
        return it->second;
    };

    LocalAggregate agg;
    agg.change_count = by_change.size();
    if (agg.change_count == 0) return agg;

    // ED_bar: mean over changes of the per-change mean ED
    double ed_sum = 0.0;
    for (const auto& [change, group] : by_change) {
        double s = 0.0;
        for (const auto& [ex, ref] : group)
            s += error_distance(ref->delta, expl_for(ex, change)->delta).mean;
        ed_sum += s / double(group.size());
    }
    agg.ed_bar = ed_sum / double(agg.change_count);

    if (agg.change_count < 2) return agg;

    // OF_bar: double sum over ordered change pairs and shared examples
    double of_sum = 0.0;
    std::size_t nonempty_pairs = 0;
    for (const auto& [c1, g1] : by_change) {
        for (const auto& [c2, g2] : by_change) {
            if (c1 == c2) continue;
            double s = 0.0;
            std::size_t n = 0;
            for (const auto& [ex, r1] : g1) {
                auto it = g2.find(ex);
                if (it == g2.end()) continue;
                const auto& r2 = *it->second;
                const auto& e1 = expl_for(ex, c1)->delta;
                const auto& e2 = expl_for(ex, c2)->delta;
                s += local_of(r1->delta, r2.delta, e1, e2);
                for (std::size_t y = 0; y < r1->delta.size(); ++y)
                    if (sgn(r1->delta[y] - r2.delta[y]) == 0 || sgn(e1[y] - e2[y]) == 0)
                        ++agg.tie_count;
                ++n;
            }
            if (n > 0) {
                of_sum += s / double(n);
                ++nonempty_pairs;
            }
        }
    }
    agg.pair_count = nonempty_pairs;
    if (nonempty_pairs > 0) agg.of_bar = of_sum / double(nonempty_pairs);
    return agg;
}

std::map<std::string, double> global_importance(
    const std::map<std::string, std::vector<std::vector<double>>>& caces_by_concept) {
    std::map<std::string, double> out;
    for (const auto& [name, caces] : caces_by_concept) {
        if (caces.empty()) throw NoChangesForConcept("no CaCE vectors for concept " + name);
        double s = 0.0;
        for (const auto& v : caces)
            for (double x : v) s += std::abs(x);
        out[name] = s / double(caces.size());
    }
    return out;
}

double global_of(const std::map<std::string, double>& gold_scores,
                 const std::map<std::string, double>& method_scores) {
    if (gold_scores.size() != method_scores.size())
        throw KeyMismatch("concept sets differ in size");
    for (const auto& [k, _] : gold_scores)
        if (!method_scores.count(k)) throw KeyMismatch("method scores lack concept " + k);
    std::size_t agree = 0, total = 0;
    for (const auto& [a, ga] : gold_scores) {
        for (const auto& [b, gb] : gold_scores) {
            if (a == b) continue;
            ++total;
            if (sgn(ga - gb) == sgn(method_scores.at(a) - method_scores.at(b))) ++agree;
        }
    }
    return total ? double(agree) / double(total) : 1.0;
}

double sensitivity(const std::vector<IcaceVector>& icaces) {
    if (icaces.empty()) throw EmptySet("sensitivity over an empty set");
    double s = 0.0;
    for (const auto& v : icaces)
        for (double x : v.delta) s += std::abs(x);
    return s / double(icaces.size());
}

double true_effect_mc(const ScmGraph& graph, const std::string& concept_name,
                      std::size_t n_samples, std::uint64_t seed, TrueEffectKind kind) {
    if (ancestors(graph, concept_name).count(graph.outcome()))
        throw NotIdentifiable("outcome is an ancestor of " + concept_name +
                              "; its interventions cannot move the outcome");

    std::size_t n_nodes = graph.concepts().size();
    std::size_t target = graph.index_of(concept_name);
    std::size_t y_idx = graph.index_of(graph.outcome());
    int n_codes = graph.concept_spec(concept_name).num_codes();
    int y_codes = graph.concept_spec(graph.outcome()).num_codes();

    std::vector<int> free_mask(n_nodes, -1);
    std::vector<double> noise(n_nodes);

    // Per-node streams keyed like sample_exogenous ("noise:<name>"), but fed
    // by the splitmix64 finalizer instead of a freshly seeded engine: the
    // estimator draws n_samples * n_nodes variates and engine construction
    // would dominate the runtime.
    struct NodeDraw {
        std::uint64_t tag;
        bool is_root;
        double mean = 0.0, std = 0.0;
    };
    std::vector<NodeDraw> draws(n_nodes);
    for (std::size_t i = 0; i < n_nodes; ++i) {
        const auto& name = graph.concepts()[i].name;
        draws[i].tag = hash_tag("noise:" + name);
        draws[i].is_root = graph.is_root(name);
        if (!draws[i].is_root) {
            draws[i].mean = graph.equation(name).noise_mean;
            draws[i].std = graph.equation(name).noise_std;
        }
    }
    auto to_unit = [](std::uint64_t x) { return double(x >> 11) * 0x1.0p-53; };
    auto fill_noise = [&](std::uint64_t item_seed) {
        for (std::size_t i = 0; i < n_nodes; ++i) {
            std::uint64_t base = mix64(item_seed, draws[i].tag);
            if (draws[i].is_root) {
                noise[i] = to_unit(mix64(base, 0));
            } else if (draws[i].std == 0.0) {
                noise[i] = draws[i].mean;
            } else {
                double u1 = to_unit(mix64(base, 0));
                std::uint64_t salt = 2;
                while (u1 <= 0.0) u1 = to_unit(mix64(base, salt++));
                double u2 = to_unit(mix64(base, 1));
                double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
                noise[i] = draws[i].mean + draws[i].std * z;
            }
        }
    };

    if (kind == TrueEffectKind::individual) {
        double total = 0.0;
        std::size_t count = 0;
        for (std::size_t s = 0; s < n_samples; ++s) {
            fill_noise(mix64(seed, s));
            auto factual = graph.evaluate_indexed(noise, free_mask);
            int from = factual[target];
            std::vector<int> forced = free_mask;
            for (int to = 0; to < n_codes; ++to) {
                if (to == from) continue;
                forced[target] = to;
                auto cf = graph.evaluate_indexed(noise, forced);
                total += (cf[y_idx] != factual[y_idx]) ? 2.0 : 0.0;
                ++count;
            }
        }
        return count ? total / double(count) : 0.0;
    }

    // population level: mean over ordered code pairs of sum_y |P(Y|do c') − P(Y|do c)|
    std::vector<std::vector<double>> y_dist(std::size_t(n_codes),
                                            std::vector<double>(std::size_t(y_codes), 0.0));
    for (std::size_t s = 0; s < n_samples; ++s) {
        fill_noise(mix64(seed, s));
        std::vector<int> forced = free_mask;
        for (int code = 0; code < n_codes; ++code) {
            forced[target] = code;
            auto v = graph.evaluate_indexed(noise, forced);
            y_dist[std::size_t(code)][std::size_t(v[y_idx])] += 1.0;
        }
    }
    for (auto& dist : y_dist)
        for (double& p : dist) p /= double(n_samples);
    double total = 0.0;
    std::size_t pairs = 0;
    for (int a = 0; a < n_codes; ++a)
        for (int b = 0; b < n_codes; ++b) {
            if (a == b) continue;
            for (int y = 0; y < y_codes; ++y)
                total += std::abs(y_dist[std::size_t(b)][std::size_t(y)] -
                                  y_dist[std::size_t(a)][std::size_t(y)]);
            ++pairs;
        }
    return pairs ? total / double(pairs) : 0.0;
}

namespace {

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(10);
    os << x;
    return os.str();
}

void write_file(const std::string& path, const std::string& body) {
    std::ofstream out(path, std::ios::trunc);
    out << body;
    if (!out) throw MalformedAssetFile("write failed: " + path);
}

}  // namespace

void write_report(const EvaluationReport& report, const std::string& dir) {
    std::filesystem::create_directories(dir);

    std::string local = "dataset,model,method,ed_bar,of_bar,tie_count,changes,pairs\n";
    for (const auto& m : report.methods) {
        local += report.dataset + "," + report.model_id + "," + m.method_id + "," +
                 fmt(m.local.ed_bar) + "," +
                 (m.local.of_bar ? fmt(*m.local.of_bar) : std::string("")) + "," +
                 std::to_string(m.local.tie_count) + "," + std::to_string(m.local.change_count) +
                 "," + std::to_string(m.local.pair_count) + "\n";
    }
    write_file(dir + "/local.csv", local);

    std::string global = "dataset,model,method,concept,importance,global_of\n";
    for (const auto& m : report.methods)
        for (const auto& [name, score] : m.importance)
            global += report.dataset + "," + report.model_id + "," + m.method_id + "," + name +
                      "," + fmt(score) + "," + fmt(m.global_of) + "\n";
    for (const auto& [name, score] : report.gold_importance)
        global += report.dataset + "," + report.model_id + ",gold," + name + "," + fmt(score) +
                  ",1\n";
    write_file(dir + "/global.csv", global);

    std::string sens = "dataset,model,concept,sensitivity\n";
    for (const auto& [name, value] : report.sensitivities)
        sens += report.dataset + "," + report.model_id + "," + name + "," + fmt(value) + "\n";
    write_file(dir + "/sensitivity.csv", sens);

    std::string effects = "dataset,concept,true_effect\n";
    for (const auto& [name, value] : report.true_effects)
        effects += report.dataset + "," + name + "," +
                   (value ? fmt(*value) : std::string("not_identifiable")) + "\n";
    write_file(dir + "/true_effects.csv", effects);

    json manifest = {{"dataset", report.dataset},
                     {"model_id", report.model_id},
                     {"graph_digest", report.graph_digest},
                     {"files", {"local.csv", "global.csv", "sensitivity.csv", "true_effects.csv"}}};
    write_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

}  // namespace liberty
