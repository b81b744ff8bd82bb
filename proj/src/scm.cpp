#include "liberty/scm.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include <nlohmann/json.hpp>

#include "liberty/rng.hpp"
#include "liberty/sha256.hpp"

namespace liberty {

using nlohmann::json;

const std::string& ConceptSpec::label(int code) const {
    for (const auto& v : values)
        if (v.code == code) return v.label;
    throw CodeOutOfRange("concept " + name + " has no code " + std::to_string(code));
}

std::string ConceptChange::key() const {
    return concept_name + ":" + std::to_string(from_code) + "->" + std::to_string(to_code);
}

const ConceptSpec& ScmGraph::concept_spec(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw UnknownConcept("unknown concept: " + name);
    return concepts_[it->second];
}

std::size_t ScmGraph::index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw UnknownConcept("unknown concept: " + name);
    return it->second;
}

const StructuralEquation& ScmGraph::equation(const std::string& name) const {
    auto it = equations_.find(name);
    if (it == equations_.end()) throw UnknownConcept("no equation for concept: " + name);
    return it->second;
}

const CategoricalPrior& ScmGraph::prior(const std::string& name) const {
    auto it = priors_.find(name);
    if (it == priors_.end()) throw UnknownConcept("no prior for concept: " + name);
    return it->second;
}

const std::set<std::string>& ScmGraph::parents(const std::string& name) const {
    static const std::set<std::string> empty;
    auto it = parents_.find(name);
    return it == parents_.end() ? empty : it->second;
}

nlohmann::json ScmGraph::to_json() const {
    json j;
    j["name"] = name_;
    j["outcome_in_change_set"] = outcome_in_change_set_;
    json cs = json::array();
    for (const auto& c : concepts_) {
        json vc = json::array();
        for (const auto& v : c.values) vc.push_back({{"code", v.code}, {"label", v.label}});
        cs.push_back({{"name", c.name},
                      {"role", c.role == ConceptRole::outcome ? "outcome" : "concept"},
                      {"values", vc}});
    }
    j["concepts"] = cs;
    json es = json::array();
    for (const auto& [a, b] : edges_) es.push_back(json::array({a, b}));
    j["edges"] = es;
    json eqs = json::array();
    for (const auto& name : topo_order_) {
        auto it = equations_.find(name);
        if (it == equations_.end()) continue;
        const auto& e = it->second;
        json terms = json::array();
        for (const auto& t : e.terms) {
            json tj = {{"parent", t.parent},
                       {"kind", t.kind == EquationTerm::Kind::code ? "code" : "indicator"},
                       {"weight", t.weight}};
            if (t.kind == EquationTerm::Kind::indicator) tj["code"] = t.match_code;
            terms.push_back(tj);
        }
        eqs.push_back({{"target", e.target},
                       {"terms", terms},
                       {"intercept", e.intercept},
                       {"noise", {{"mean", e.noise_mean}, {"std", e.noise_std}}},
                       {"clamp", json::array({e.clamp_lo, e.clamp_hi})}});
    }
    j["equations"] = eqs;
    json ps = json::array();
    for (const auto& name : topo_order_) {
        auto it = priors_.find(name);
        if (it == priors_.end()) continue;
        ps.push_back({{"concept", name}, {"probs", it->second.probs}});
    }
    j["priors"] = ps;
    return j;
}

void ScmGraph::compile() {
    topo_indices_.clear();
    for (const auto& n : topo_order_) topo_indices_.push_back(index_.at(n));
    compiled_.assign(concepts_.size(), {});
    for (std::size_t i = 0; i < concepts_.size(); ++i) {
        auto& node = compiled_[i];
        const auto& name = concepts_[i].name;
        if (auto it = priors_.find(name); it != priors_.end()) {
            node.is_root = true;
            double acc = 0;
            for (double p : it->second.probs) {
                acc += p;
                node.cdf.push_back(acc);
            }
        } else {
            const auto& eq = equations_.at(name);
            node.intercept = eq.intercept;
            node.clamp_lo = eq.clamp_lo;
            node.clamp_hi = eq.clamp_hi;
            for (const auto& t : eq.terms)
                node.terms.push_back({index_.at(t.parent),
                                      t.kind == EquationTerm::Kind::indicator, t.match_code,
                                      t.weight});
        }
    }
}

std::vector<int> ScmGraph::evaluate_indexed(const std::vector<double>& noise,
                                            const std::vector<int>& forced) const {
    std::vector<int> out(concepts_.size(), 0);
    for (std::size_t idx : topo_indices_) {
        if (forced[idx] >= 0) {
            out[idx] = forced[idx];
            continue;
        }
        const auto& node = compiled_[idx];
        if (node.is_root) {
            double u = noise[idx];
            int code = 0;
            while (code + 1 < static_cast<int>(node.cdf.size()) &&
                   u >= node.cdf[std::size_t(code)])
                ++code;
            out[idx] = code;
        } else {
            double sum = node.intercept + noise[idx];
            for (const auto& t : node.terms) {
                int pv = out[t.parent];
                sum += t.indicator ? (pv == t.match_code ? t.weight : 0.0) : t.weight * pv;
            }
            int v = static_cast<int>(round_half_away(sum));
            out[idx] = std::clamp(v, node.clamp_lo, node.clamp_hi);
        }
    }
    return out;
}

namespace {

void check_concepts(const json& spec, ScmGraph& g, std::vector<ConceptSpec>& concepts,
                    std::string& outcome) {
    for (const auto& cj : spec.at("concepts")) {
        ConceptSpec c;
        c.name = cj.at("name").get<std::string>();
        std::string role = cj.value("role", "concept");
        c.role = role == "outcome" ? ConceptRole::outcome : ConceptRole::concept_var;
        for (const auto& vj : cj.at("values"))
            c.values.push_back({vj.at("code").get<int>(), vj.at("label").get<std::string>()});
        if (c.values.size() < 2)
            throw InvalidGraphSpec("concept " + c.name + " needs at least 2 values");
        for (std::size_t i = 0; i < c.values.size(); ++i)
            if (c.values[i].code != static_cast<int>(i))
                throw InvalidGraphSpec("codes of " + c.name +
                                       " must be consecutive integers from 0");
        if (c.role == ConceptRole::outcome) {
            if (!outcome.empty())
                throw MultipleOutcomes("more than one outcome concept: " + outcome + ", " +
                                       c.name);
            outcome = c.name;
        }
        concepts.push_back(std::move(c));
    }
    if (outcome.empty()) throw InvalidGraphSpec("no outcome concept declared");
    (void)g;
}

}  // namespace

ScmGraph validate_graph(const json& spec) {
    ScmGraph g;
    g.name_ = spec.value("name", "");
    g.outcome_in_change_set_ = spec.value("outcome_in_change_set", false);

    check_concepts(spec, g, g.concepts_, g.outcome_);
    for (std::size_t i = 0; i < g.concepts_.size(); ++i) g.index_[g.concepts_[i].name] = i;

    for (const auto& ej : spec.at("edges")) {
        std::string a = ej.at(0).get<std::string>();
        std::string b = ej.at(1).get<std::string>();
        if (!g.index_.count(a)) throw UnknownParent("edge source not a concept: " + a);
        if (!g.index_.count(b)) throw UnknownParent("edge target not a concept: " + b);
        g.edges_.emplace_back(a, b);
        g.parents_[b].insert(a);
    }

    // topological order (Kahn); detects cycles
    std::map<std::string, int> indeg;
    std::map<std::string, std::vector<std::string>> out;
    for (const auto& c : g.concepts_) indeg[c.name] = 0;
    for (const auto& [a, b] : g.edges_) {
        out[a].push_back(b);
        ++indeg[b];
    }
    std::deque<std::string> ready;
    for (const auto& c : g.concepts_)  // declaration order keeps the order deterministic
        if (indeg[c.name] == 0) ready.push_back(c.name);
    while (!ready.empty()) {
        auto n = ready.front();
        ready.pop_front();
        g.topo_order_.push_back(n);
        for (const auto& m : out[n])
            if (--indeg[m] == 0) ready.push_back(m);
    }
    if (g.topo_order_.size() != g.concepts_.size())
        throw CycleDetected("graph has a cycle among its concept edges");

    for (const auto& pj : spec.value("priors", json::array())) {
        std::string name = pj.at("concept").get<std::string>();
        if (!g.index_.count(name)) throw UnknownParent("prior for unknown concept: " + name);
        CategoricalPrior p;
        p.probs = pj.at("probs").get<std::vector<double>>();
        const auto& c = g.concepts_[g.index_[name]];
        if (static_cast<int>(p.probs.size()) != c.num_codes())
            throw InvalidGraphSpec("prior size mismatch for " + name);
        double sum = 0;
        for (double x : p.probs) {
            if (x < 0) throw InvalidGraphSpec("negative prior probability for " + name);
            sum += x;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw InvalidGraphSpec("prior for " + name + " does not sum to 1");
        g.priors_[name] = std::move(p);
    }

    for (const auto& ej : spec.value("equations", json::array())) {
        StructuralEquation e;
        e.target = ej.at("target").get<std::string>();
        if (!g.index_.count(e.target))
            throw UnknownParent("equation for unknown concept: " + e.target);
        if (g.priors_.count(e.target))
            throw InvalidGraphSpec("concept " + e.target + " has both a prior and an equation");
        const auto& declared = g.parents(e.target);
        std::set<std::string> covered;
        for (const auto& tj : ej.at("terms")) {
            EquationTerm t;
            t.parent = tj.at("parent").get<std::string>();
            std::string kind = tj.value("kind", "code");
            t.kind = kind == "indicator" ? EquationTerm::Kind::indicator : EquationTerm::Kind::code;
            if (t.kind == EquationTerm::Kind::indicator) t.match_code = tj.at("code").get<int>();
            t.weight = tj.at("weight").get<double>();
            if (!declared.count(t.parent))
                throw EquationParentMismatch("equation for " + e.target + " references " +
                                             t.parent + ", which is not a declared parent");
            covered.insert(t.parent);
            e.terms.push_back(std::move(t));
        }
        for (const auto& p : declared)
            if (!covered.count(p))
                throw EquationParentMismatch("equation for " + e.target +
                                             " does not cover parent " + p);
        e.intercept = ej.value("intercept", 0.0);
        if (ej.contains("noise")) {
            e.noise_mean = ej["noise"].value("mean", 0.0);
            e.noise_std = ej["noise"].value("std", 0.0);
        }
        if (e.noise_std < 0) throw InvalidGraphSpec("negative noise std for " + e.target);
        const auto& spec_c = g.concepts_[g.index_[e.target]];
        e.clamp_lo = ej.at("clamp").at(0).get<int>();
        e.clamp_hi = ej.at("clamp").at(1).get<int>();
        if (e.clamp_lo > e.clamp_hi || e.clamp_lo < 0 || e.clamp_hi >= spec_c.num_codes())
            throw InvalidGraphSpec("clamp range of " + e.target + " outside its code range");
        g.equations_[e.target] = std::move(e);
    }

    for (const auto& c : g.concepts_) {
        bool has_parents = !g.parents(c.name).empty();
        if (has_parents && !g.equations_.count(c.name))
            throw InvalidGraphSpec("non-root concept " + c.name + " has no equation");
        if (!has_parents && !g.priors_.count(c.name) && !g.equations_.count(c.name))
            throw InvalidGraphSpec("root concept " + c.name + " has no prior");
    }

    g.compile();
    g.digest_ = sha256_hex(g.to_json().dump());
    return g;
}

ScmGraph validate_graph_from_string(const std::string& json_text) {
    return validate_graph(json::parse(json_text));
}

ExogenousRecord sample_exogenous(const ScmGraph& graph, std::uint64_t seed,
                                 const std::vector<std::string>& persona_ids,
                                 const std::vector<std::string>& template_ids) {
    ExogenousRecord rec;
    rec.seed = seed;
    for (const auto& name : graph.topological_order()) {
        // per-node derived stream: draws do not shift when other nodes change
        Rng rng = Rng::derive(seed, "noise:" + name);
        if (graph.is_root(name)) {
            rec.noise[name] = rng.next_uniform();
        } else {
            const auto& eq = graph.equation(name);
            rec.noise[name] = rng.next_gaussian(eq.noise_mean, eq.noise_std);
        }
    }
    if (!persona_ids.empty()) {
        Rng rng = Rng::derive(seed, "persona");
        rec.persona_id = persona_ids[rng.next_below(persona_ids.size())];
    }
    if (!template_ids.empty()) {
        Rng rng = Rng::derive(seed, "template");
        rec.template_id = template_ids[rng.next_below(template_ids.size())];
    }
    return rec;
}

ConceptAssignment evaluate(const ScmGraph& graph, const ExogenousRecord& exo,
                           const std::map<std::string, int>& interventions) {
    std::vector<int> forced(graph.concepts().size(), -1);
    for (const auto& [name, code] : interventions) {
        const auto& c = graph.concept_spec(name);  // throws UnknownConcept
        if (code < 0 || code >= c.num_codes())
            throw CodeOutOfRange("intervention " + name + "=" + std::to_string(code) +
                                 " outside code range");
        forced[graph.index_of(name)] = code;
    }
    std::vector<double> noise(graph.concepts().size(), 0.0);
    for (const auto& [name, v] : exo.noise)
        if (graph.has_concept(name)) noise[graph.index_of(name)] = v;

    std::vector<int> vals = graph.evaluate_indexed(noise, forced);
    ConceptAssignment a;
    for (std::size_t i = 0; i < graph.concepts().size(); ++i)
        a.values[graph.concepts()[i].name] = vals[i];
    for (const auto& [name, code] : interventions) a.interventions.insert(name);
    return a;
}

ConceptAssignment counterfactual_assignment(const ScmGraph& graph, const ExogenousRecord& exo,
                                            const ConceptChange& change) {
    ConceptAssignment factual = evaluate(graph, exo);
    int actual = factual.values.at(change.concept_name);
    if (actual != change.from_code)
        throw FactualMismatch("factual value of " + change.concept_name + " is " +
                              std::to_string(actual) + ", change expects " +
                              std::to_string(change.from_code));
    return evaluate(graph, exo, {{change.concept_name, change.to_code}});
}

std::vector<ConceptChange> enumerate_changes(const ScmGraph& graph,
                                             const std::optional<std::string>& concept_name) {
    std::vector<ConceptChange> out;
    auto add = [&](const ConceptSpec& c) {
        for (int from = 0; from < c.num_codes(); ++from)
            for (int to = 0; to < c.num_codes(); ++to)
                if (from != to) out.push_back({c.name, from, to});
    };
    if (concept_name) {
        add(graph.concept_spec(*concept_name));
    } else {
        for (const auto& c : graph.concepts()) {
            if (c.role == ConceptRole::outcome && !graph.outcome_in_change_set()) continue;
            add(c);
        }
    }
    return out;
}

namespace {
std::set<std::string> closure(const ScmGraph& graph, const std::string& concept_name, bool forward) {
    graph.concept_spec(concept_name);  // throws UnknownConcept
    std::map<std::string, std::vector<std::string>> adj;
    for (const auto& [a, b] : graph.edges()) {
        if (forward)
            adj[a].push_back(b);
        else
            adj[b].push_back(a);
    }
    std::set<std::string> seen;
    std::deque<std::string> work{concept_name};
    while (!work.empty()) {
        auto n = work.front();
        work.pop_front();
        for (const auto& m : adj[n])
            if (seen.insert(m).second) work.push_back(m);
    }
    seen.erase(concept_name);
    return seen;
}
}  // namespace

std::set<std::string> ancestors(const ScmGraph& graph, const std::string& concept_name) {
    return closure(graph, concept_name, false);
}

std::set<std::string> descendants(const ScmGraph& graph, const std::string& concept_name) {
    return closure(graph, concept_name, true);
}

json exo_to_json(const ExogenousRecord& exo) {
    return {{"noise", exo.noise},
            {"persona_id", exo.persona_id},
            {"template_id", exo.template_id},
            {"seed", exo.seed}};
}

ExogenousRecord exo_from_json(const json& j) {
    ExogenousRecord r;
    r.noise = j.at("noise").get<std::map<std::string, double>>();
    r.persona_id = j.at("persona_id").get<std::string>();
    r.template_id = j.at("template_id").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    return r;
}

json assignment_to_json(const ConceptAssignment& a) {
    return {{"values", a.values}, {"interventions", a.interventions}};
}

ConceptAssignment assignment_from_json(const json& j) {
    ConceptAssignment a;
    a.values = j.at("values").get<std::map<std::string, int>>();
    a.interventions = j.at("interventions").get<std::set<std::string>>();
    return a;
}

}  // namespace liberty
