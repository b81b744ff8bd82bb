#include "liberty/explainers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "liberty/errors.hpp"
#include "liberty/rng.hpp"
#include "liberty/sha256.hpp"

namespace liberty {

namespace {

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw LengthMismatch("embedding dimensions differ");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

ExplanationVector mean_delta(const CandidatePool& pool, const std::vector<std::size_t>& chosen,
                             const QueryPoint& x, const ConceptChange& change,
                             std::string method_id) {
    if (chosen.empty()) throw EmptyCandidateSet("no candidate for " + change.key());
    std::vector<double> delta(x.prediction.probs.size(), 0.0);
    for (std::size_t idx : chosen) {
        const auto& p = pool.candidates()[idx].prediction.probs;
        if (p.size() != delta.size()) throw LengthMismatch("prediction lengths differ");
        for (std::size_t i = 0; i < delta.size(); ++i) delta[i] += p[i];
    }
    for (std::size_t i = 0; i < delta.size(); ++i)
        delta[i] = delta[i] / double(chosen.size()) - x.prediction.probs[i];
    return {std::move(delta), std::move(method_id), change, x.example_id};
}

// indices of `eligible` ranked by similarity desc, candidate-id asc on ties
std::vector<std::size_t> top_k(const CandidatePool& pool, const std::vector<std::size_t>& eligible,
                               const std::vector<double>& sims, std::size_t k) {
    std::vector<std::size_t> order(eligible.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (sims[a] != sims[b]) return sims[a] > sims[b];
        return pool.candidates()[eligible[a]].id < pool.candidates()[eligible[b]].id;
    });
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < std::min(k, order.size()); ++i)
        out.push_back(eligible[order[i]]);
    return out;
}

// eligible candidates: target concept equals to_code and text differs from x
std::vector<std::size_t> target_matches(const CandidatePool& pool, const QueryPoint& x,
                                        const ConceptChange& change) {
    std::vector<std::size_t> out;
    for (std::size_t idx : pool.with(change.concept_name, change.to_code))
        if (pool.candidates()[idx].text != x.text) out.push_back(idx);
    return out;
}

}  // namespace

CandidatePool::CandidatePool(const DgpBundle& bundle, std::vector<Candidate> candidates)
    : bundle_(bundle), candidates_(std::move(candidates)) {
    for (std::size_t i = 0; i < candidates_.size(); ++i)
        for (const auto& [name, code] : candidates_[i].assignment.values)
            by_value_[{name, code}].push_back(i);
}

const std::vector<std::size_t>& CandidatePool::with(const std::string& concept_name,
                                                    int code) const {
    auto it = by_value_.find({concept_name, code});
    return it == by_value_.end() ? empty_ : it->second;
}

CandidatePool CandidatePool::build(const DgpBundle& bundle, const std::vector<Example>& examples,
                                   Model& model, ConceptPredictor& predictor, Embedder& embedder) {
    std::vector<Candidate> cands;
    cands.reserve(examples.size());
    for (const auto& ex : examples) {
        Candidate c;
        c.id = ex.id;
        c.text = ex.text;
        c.concept_probs = predictor.predict_concepts(ex.text);
        for (const auto& [name, probs] : c.concept_probs.per_concept) {
            auto it = std::max_element(probs.begin(), probs.end());
            c.assignment.values[name] = int(it - probs.begin());
        }
        c.embedding = embedder.embed(ex.text).vec;
        c.prediction = model.predict(ex.text);
        cands.push_back(std::move(c));
    }
    return CandidatePool(bundle, std::move(cands));
}

ExplanationVector explain_semantic_match(const CandidatePool& pool, const QueryPoint& x,
                                         const ConceptChange& change,
                                         const std::string& provider_id, std::size_t k) {
    auto eligible = target_matches(pool, x, change);
    if (eligible.empty()) throw EmptyCandidateSet("no candidate with " + change.key());
    std::vector<double> sims(eligible.size());
    for (std::size_t i = 0; i < eligible.size(); ++i)
        sims[i] = cosine_similarity(x.embedding, pool.candidates()[eligible[i]].embedding);
    auto chosen = top_k(pool, eligible, sims, k);
    return mean_delta(pool, chosen, x, change, "semantic-match/" + provider_id);
}

ExplanationVector explain_approx(const CandidatePool& pool, const QueryPoint& x,
                                 const ConceptChange& change, std::uint64_t seed, std::size_t k) {
    auto eligible = target_matches(pool, x, change);
    if (eligible.empty()) throw EmptyCandidateSet("no candidate with " + change.key());

    auto mismatches = [&](std::size_t idx) {
        int count = 0;
        for (const auto& [name, code] : x.assignment.values) {
            if (name == change.concept_name) continue;
            if (pool.candidates()[idx].assignment.values.at(name) != code) ++count;
        }
        return count;
    };

    std::vector<std::size_t> perfect, near;
    for (std::size_t idx : eligible) {
        int m = mismatches(idx);
        if (m == 0)
            perfect.push_back(idx);
        else if (m == 1)
            near.push_back(idx);
    }
    auto& selected = perfect.empty() ? near : perfect;
    if (selected.empty())
        throw EmptyCandidateSet("no candidate within one mismatch for " + change.key());

    Rng rng = Rng::derive(seed, "approx:" + x.example_id + ":" + change.key());
    for (std::size_t i = 0; i + 1 < selected.size(); ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng.next_below(selected.size() - i));
        std::swap(selected[i], selected[j]);
    }
    if (selected.size() > k) selected.resize(k);
    return mean_delta(pool, selected, x, change, "approx");
}

ExplanationVector explain_convecs(const CandidatePool& pool, const QueryPoint& x,
                                  const ConceptChange& change, std::size_t k) {
    auto eligible = target_matches(pool, x, change);
    if (eligible.empty()) throw EmptyCandidateSet("no candidate with " + change.key());

    // concatenated per-concept simplices, skipping the target concept's block
    auto flatten = [&](const ConceptPrediction& cp) {
        std::vector<double> v;
        for (const auto& [name, probs] : cp.per_concept) {
            if (name == change.concept_name) continue;
            v.insert(v.end(), probs.begin(), probs.end());
        }
        return v;
    };
    auto xv = flatten(x.concept_probs);
    std::vector<double> sims(eligible.size());
    for (std::size_t i = 0; i < eligible.size(); ++i)
        sims[i] = cosine_similarity(xv, flatten(pool.candidates()[eligible[i]].concept_probs));
    auto chosen = top_k(pool, eligible, sims, k);
    return mean_delta(pool, chosen, x, change, "convecs");
}

CfStrategy parse_strategy(const std::string& name) {
    if (name == "only_change") return CfStrategy::only_change;
    if (name == "fix_all") return CfStrategy::fix_all;
    if (name == "fix_confounders") return CfStrategy::fix_confounders;
    if (name == "mediators_confounders") return CfStrategy::mediators_confounders;
    throw UnknownStrategy("unknown counterfactual-generation strategy: " + name);
}

std::string strategy_name(CfStrategy s) {
    switch (s) {
        case CfStrategy::only_change: return "only_change";
        case CfStrategy::fix_all: return "fix_all";
        case CfStrategy::fix_confounders: return "fix_confounders";
        case CfStrategy::mediators_confounders: return "mediators_confounders";
    }
    throw UnknownStrategy("invalid strategy value");
}

namespace {

std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += ", ";
        out += parts[i];
    }
    return out;
}

std::string doc_label(const DgpBundle& bundle) {
    auto it = bundle.prompt_set.find("doc_label");
    return it == bundle.prompt_set.end() ? "document" : it->second;
}

}  // namespace

std::string build_cf_prompt(CfStrategy strategy, const DgpBundle& bundle, const std::string& text,
                            const ConceptChange& change) {
    const std::string doc = doc_label(bundle);
    const std::string& name = change.concept_name;
    const std::string old_value = bundle.verbalize(name, change.from_code);
    const std::string new_value = bundle.verbalize(name, change.to_code);

    std::vector<std::string> confounders, mediators, all_concepts;
    auto anc = ancestors(bundle.graph, name);
    auto desc = descendants(bundle.graph, name);
    for (const auto& c : bundle.graph.concepts()) {
        if (c.name != name) all_concepts.push_back(c.name);
        if (anc.count(c.name)) confounders.push_back(c.name);
        if (desc.count(c.name)) mediators.push_back(c.name);
    }

    std::string head, tail;
    switch (strategy) {
        case CfStrategy::only_change:
            head = "I'm providing a " + doc + ". Update it by modifying only the `" + name +
                   "` concept.\n";
            tail = "The `" + name + "` is `" + old_value + "`. Change it to `" + new_value +
                   "` while keeping all other aspects unchanged.\n";
            break;
        case CfStrategy::fix_all:
            head = "I'm providing a " + doc + ". Your task is to update it by modifying the `" +
                   name + "` concept.\n";
            tail = "The `" + name + "` is `" + old_value + "`. Change it to `" + new_value +
                   "`.\nThe " + doc + " includes the following concepts: " + join(all_concepts) +
                   ".\nSome of these concepts are causally linked to `" + name +
                   "` and may require adjustments to maintain logical consistency.\n";
            break;
        case CfStrategy::fix_confounders:
            head = "I'm providing a " + doc + ". Your task is to update it by modifying the `" +
                   name + "` concept.\n";
            tail = "The `" + name + "` is `" + old_value + "`. Change it to `" + new_value +
                   "`.\nThe following concepts are confounders and must not be changed: " +
                   join(confounders) + ".\n";
            break;
        case CfStrategy::mediators_confounders:
            head = "I'm providing a " + doc + ". Your task is to update it by modifying the `" +
                   name + "` concept.\n";
            tail = "The `" + name + "` is `" + old_value + "`. Change it to `" + new_value +
                   "`.\nThe following concepts are confounders, meaning they must remain "
                   "unchanged: " +
                   join(confounders) +
                   ".\nThe following concepts are mediators, meaning they are causally "
                   "influenced by `" +
                   name + "` and may require adjustments to maintain logical consistency: " +
                   join(mediators) + ".\n";
            break;
    }
    return head + "---- Input " + doc + " ----\n" + text + "\n---- Instruction ----\n" + tail +
           "---- Edited " + doc + " ----\nReturn only the updated " + doc +
           " with no additional text.";
}

LlmCfGenerator::LlmCfGenerator(LlmEndpoint endpoint, std::string cache_dir)
    : endpoint_(std::move(endpoint)), cache_(std::move(cache_dir)) {}

std::string LlmCfGenerator::generate(const DgpBundle& bundle, const std::string& text,
                                     const ConceptChange& change, CfStrategy strategy) {
    std::string key =
        sha256_hex(strategy_name(strategy) + "|" + sha256_hex(text) + "|" + change.key());
    return cache_.get_or_compute(bundle.name, key, id(), bundle.prompt_version, [&] {
        std::string prompt = build_cf_prompt(strategy, bundle, text, change);
        return chat_completion(endpoint_, "You edit documents precisely as instructed.", prompt,
                               0.0);
    });
}

StructuralCfGenerator::StructuralCfGenerator(const std::vector<Example>& examples) {
    for (const auto& ex : examples) by_digest_[sha256_hex(ex.text)] = ex.exogenous;
}

std::string StructuralCfGenerator::generate(const DgpBundle& bundle, const std::string& text,
                                            const ConceptChange& change, CfStrategy) {
    auto it = by_digest_.find(sha256_hex(text));
    if (it == by_digest_.end()) throw UnknownText("text not in the generator's dataset");
    auto cf = counterfactual_assignment(bundle.graph, it->second, change);
    return render_deterministic(bundle, cf, bundle.persona(it->second.persona_id),
                                bundle.template_asset(it->second.template_id))
        .text;
}

ExplanationVector explain_cfgen(CounterfactualGenerator& generator, Model& model,
                                const DgpBundle& bundle, const QueryPoint& x,
                                const ConceptChange& change, CfStrategy strategy) {
    std::string cf_text = generator.generate(bundle, x.text, change, strategy);
    auto fx = model.predict(x.text);
    auto fcf = model.predict(cf_text);
    if (fx.probs.size() != fcf.probs.size()) throw LengthMismatch("prediction lengths differ");
    std::vector<double> delta(fx.probs.size());
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = fcf.probs[i] - fx.probs[i];
    return {std::move(delta), "cfgen/" + strategy_name(strategy) + "/" + generator.id(), change,
            x.example_id};
}

}  // namespace liberty
