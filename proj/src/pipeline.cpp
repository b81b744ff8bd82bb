#include "liberty/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "liberty/errors.hpp"
#include "liberty/sha256.hpp"

namespace liberty {

using nlohmann::json;

std::string example_id(const std::string& dataset, std::uint64_t seed, const std::string& split,
                       std::uint64_t index) {
    return sha256_hex(dataset + "|" + std::to_string(seed) + "|" + split + "|" +
                      std::to_string(index))
        .substr(0, 16);
}

void attach_counterfactuals(const DgpBundle& bundle, Example& example, std::size_t n, Rng& rng,
                            const GenerationOptions& options) {
    std::vector<ConceptChange> applicable;
    for (const auto& change : enumerate_changes(bundle.graph))
        if (example.assignment.values.at(change.concept_name) == change.from_code)
            applicable.push_back(change);
    if (applicable.empty())
        throw InsufficientChanges("no applicable concept change for example " + example.id);

    // partial Fisher-Yates: first min(n, size) entries, uniform without replacement
    std::size_t take = std::min(n, applicable.size());
    for (std::size_t i = 0; i < take; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng.next_below(applicable.size() - i));
        std::swap(applicable[i], applicable[j]);
    }
    applicable.resize(take);
    std::sort(applicable.begin(), applicable.end());

    for (const auto& change : applicable) {
        Counterfactual cf;
        cf.change = change;
        cf.assignment = counterfactual_assignment(bundle.graph, example.exogenous, change);
        cf.text = options.renderer
                      ? options
                            .renderer(bundle, cf.assignment, example.exogenous.persona_id,
                                      example.exogenous.template_id)
                            .text
                      : render_deterministic(bundle, cf.assignment,
                                             bundle.persona(example.exogenous.persona_id),
                                             bundle.template_asset(example.exogenous.template_id))
                            .text;
        example.counterfactuals.push_back(std::move(cf));
    }
}

namespace {

Example build_example(const DgpBundle& bundle, const GenerationOptions& options,
                      std::uint64_t index) {
    Example ex;
    ex.dataset = bundle.name;
    ex.split = options.split;
    ex.index = index;
    ex.id = example_id(bundle.name, options.seed, options.split, index);

    std::uint64_t item_seed = mix64(mix64(options.seed, hash_tag(options.split)), index);
    ex.exogenous =
        sample_exogenous(bundle.graph, item_seed, bundle.persona_ids(), bundle.template_ids());
    ex.assignment = evaluate(bundle.graph, ex.exogenous);

    if (options.renderer) {
        auto r = options.renderer(bundle, ex.assignment, ex.exogenous.persona_id,
                                  ex.exogenous.template_id);
        ex.text = r.text;
        ex.renderer_id = r.renderer_id;
    } else {
        auto r = render_deterministic(bundle, ex.assignment, bundle.persona(ex.exogenous.persona_id),
                                      bundle.template_asset(ex.exogenous.template_id));
        ex.text = r.text;
        ex.renderer_id = r.renderer_id;
    }

    if (options.counterfactuals_per_example > 0) {
        Rng cf_rng = Rng::derive(item_seed, "counterfactuals");
        attach_counterfactuals(bundle, ex, options.counterfactuals_per_example, cf_rng, options);
    }
    return ex;
}

}  // namespace

std::vector<Example> generate_dataset(const DgpBundle& bundle, const GenerationOptions& options) {
    std::vector<Example> out(options.count);
    std::size_t jobs = std::max<std::size_t>(1, options.jobs);
    if (jobs == 1 || options.count < 2) {
        for (std::size_t i = 0; i < options.count; ++i)
            out[i] = build_example(bundle, options, i);
        return out;
    }

    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex err_mu;
    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= options.count || failed.load()) return;
            try {
                out[i] = build_example(bundle, options, i);
            } catch (...) {
                std::lock_guard lock(err_mu);
                if (!first_error) first_error = std::current_exception();
                failed.store(true);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(jobs, options.count); ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
    return out;
}

std::vector<InterventionalPair> pairs_of(const std::vector<Example>& examples) {
    std::vector<InterventionalPair> out;
    for (const auto& ex : examples)
        for (const auto& cf : ex.counterfactuals)
            out.push_back({ex.id, cf.change, ex.text, cf.text, ex.assignment, cf.assignment});
    return out;
}

namespace {

json example_to_json(const Example& ex) {
    json cfs = json::array();
    for (const auto& cf : ex.counterfactuals)
        cfs.push_back({{"concept", cf.change.concept_name},
                       {"from", cf.change.from_code},
                       {"to", cf.change.to_code},
                       {"assignment", assignment_to_json(cf.assignment)},
                       {"text", cf.text}});
    return {{"id", ex.id},
            {"dataset", ex.dataset},
            {"split", ex.split},
            {"index", ex.index},
            {"exogenous", exo_to_json(ex.exogenous)},
            {"assignment", assignment_to_json(ex.assignment)},
            {"text", ex.text},
            {"renderer_id", ex.renderer_id},
            {"counterfactuals", std::move(cfs)}};
}

Example example_from_json(const json& j) {
    Example ex;
    ex.id = j.at("id").get<std::string>();
    ex.dataset = j.at("dataset").get<std::string>();
    ex.split = j.at("split").get<std::string>();
    ex.index = j.at("index").get<std::uint64_t>();
    ex.exogenous = exo_from_json(j.at("exogenous"));
    ex.assignment = assignment_from_json(j.at("assignment"));
    ex.text = j.at("text").get<std::string>();
    ex.renderer_id = j.at("renderer_id").get<std::string>();
    for (const auto& cj : j.at("counterfactuals")) {
        Counterfactual cf;
        cf.change = {cj.at("concept").get<std::string>(), cj.at("from").get<int>(),
                     cj.at("to").get<int>()};
        cf.assignment = assignment_from_json(cj.at("assignment"));
        cf.text = cj.at("text").get<std::string>();
        ex.counterfactuals.push_back(std::move(cf));
    }
    return ex;
}

}  // namespace

void write_jsonl(const std::string& path, const DgpBundle& bundle,
                 const std::vector<Example>& examples) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw MalformedAssetFile("cannot open for writing: " + path);
    json manifest = {{"schema_version", kSchemaVersion},
                     {"dataset", bundle.name},
                     {"graph_digest", bundle.graph.digest()},
                     {"prng_id", Rng::kPrngId},
                     {"prompt_version", bundle.prompt_version},
                     {"count", examples.size()}};
    out << manifest.dump() << '\n';
    for (const auto& ex : examples) out << example_to_json(ex).dump() << '\n';
    if (!out) throw MalformedAssetFile("write failed: " + path);
}

std::vector<Example> read_jsonl(const std::string& path, const DgpBundle& bundle) {
    std::ifstream in(path);
    if (!in) throw MalformedAssetFile("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw CorruptLine(1, "missing manifest line");
    json manifest;
    try {
        manifest = json::parse(line);
    } catch (const json::exception& e) {
        throw CorruptLine(1, e.what());
    }
    if (manifest.value("schema_version", -1) != kSchemaVersion)
        throw SchemaVersionMismatch("dataset file " + path + " has schema version " +
                                    manifest.value("schema_version", json()).dump() +
                                    ", expected " + std::to_string(kSchemaVersion));
    if (manifest.value("graph_digest", "") != bundle.graph.digest())
        throw GraphDigestMismatch("dataset file " + path +
                                  " was generated from a different graph definition");

    std::vector<Example> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(example_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw CorruptLine(lineno, e.what());
        }
    }
    std::size_t expected = manifest.value("count", out.size());
    if (out.size() != expected)
        throw CorruptLine(lineno, "expected " + std::to_string(expected) + " examples, found " +
                                      std::to_string(out.size()));
    return out;
}

}  // namespace liberty
