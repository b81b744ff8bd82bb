#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "liberty/adapters.hpp"
#include "liberty/dgp.hpp"
#include "liberty/errors.hpp"
#include "liberty/explainers.hpp"
#include "liberty/metrics.hpp"
#include "liberty/pipeline.hpp"
#include "liberty/render.hpp"
#include "liberty/sha256.hpp"

namespace {

using namespace liberty;
using nlohmann::json;

constexpr int kExitConfig = 2;
constexpr int kExitUpstream = 3;
constexpr int kExitRemote = 4;
constexpr int kExitIntegrity = 5;

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

const std::vector<std::string> kSplitNames = {"train", "dev", "test", "method"};

// model spec: "oracle[:kappa]" | "file:<path>" | "remote:<url>"
std::unique_ptr<Model> make_model(const std::string& spec, const DgpBundle& bundle) {
    if (spec.rfind("oracle", 0) == 0) {
        double kappa = 2.0;
        if (auto pos = spec.find(':'); pos != std::string::npos)
            kappa = std::stod(spec.substr(pos + 1));
        return std::make_unique<OracleModel>(bundle, kappa);
    }
    if (spec.rfind("file:", 0) == 0)
        return std::make_unique<FileModel>(spec.substr(5), "file-model");
    if (spec.rfind("remote:", 0) == 0)
        return std::make_unique<RemoteModel>(RemoteEndpoint{spec.substr(7)}, "remote-model");
    throw CLI::ValidationError("--model", "unknown model spec: " + spec);
}

std::unique_ptr<ConceptPredictor> make_predictor(const std::string& spec,
                                                 const DgpBundle& bundle) {
    if (spec == "gold") return std::make_unique<GoldConceptPredictor>(bundle);
    if (spec.rfind("file:", 0) == 0)
        return std::make_unique<FileConceptPredictor>(spec.substr(5), bundle);
    if (spec.rfind("remote:", 0) == 0)
        return std::make_unique<RemoteConceptPredictor>(RemoteEndpoint{spec.substr(7)}, bundle);
    throw CLI::ValidationError("--concepts", "unknown concept predictor spec: " + spec);
}

std::unique_ptr<Embedder> make_embedder(const std::string& spec, const DgpBundle& bundle) {
    if (spec == "markers") return std::make_unique<BagOfMarkersEmbedder>(bundle);
    if (spec.rfind("file:", 0) == 0)
        return std::make_unique<FileEmbedder>(spec.substr(5), "file-embedder");
    if (spec.rfind("remote:", 0) == 0)
        return std::make_unique<RemoteEmbedder>(RemoteEndpoint{spec.substr(7)}, "remote-embedder");
    throw CLI::ValidationError("--embedder", "unknown embedder spec: " + spec);
}

std::string dataset_path(const std::string& dir, const std::string& split) {
    return dir + "/" + split + ".jsonl";
}

int cmd_generate(const std::string& dataset, const std::string& sizes_csv, std::uint64_t seed,
                 const std::string& renderer, const std::string& out_dir,
                 const std::string& asset_dir, const std::string& llm_url,
                 const std::string& llm_model, const std::string& cache_dir, std::size_t cf_n,
                 std::size_t jobs) {
    DgpBundle bundle = load_builtin(dataset, asset_dir);
    auto sizes = split_list(sizes_csv);
    if (sizes.empty() || sizes.size() > kSplitNames.size())
        throw CLI::ValidationError("--sizes", "expected 1..4 comma-separated sizes");
    std::filesystem::create_directories(out_dir);

    std::optional<LlmEndpoint> endpoint;
    std::optional<RenderCache> cache;
    if (renderer == "llm") {
        endpoint = LlmEndpoint{llm_url, llm_model};
        cache.emplace(cache_dir);
    } else if (renderer != "deterministic") {
        throw CLI::ValidationError("--renderer", "must be deterministic or llm");
    }

    json manifest = {{"dataset", dataset},
                     {"seed", seed},
                     {"renderer", renderer},
                     {"graph_digest", bundle.graph.digest()},
                     {"prng_id", Rng::kPrngId},
                     {"splits", json::object()}};
    std::size_t total_examples = 0, total_pairs = 0;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        GenerationOptions opts;
        opts.seed = seed;
        opts.split = kSplitNames[i];
        opts.count = std::stoull(sizes[i]);
        opts.counterfactuals_per_example = cf_n;
        opts.jobs = jobs;
        if (endpoint) {
            opts.renderer = [&](const DgpBundle& b, const ConceptAssignment& a,
                                const std::string& pid, const std::string& tid) {
                return render_llm(*endpoint, b, a, b.persona(pid), b.template_asset(tid), *cache);
            };
        }
        auto examples = generate_dataset(bundle, opts);
        std::string path = dataset_path(out_dir, opts.split);
        write_jsonl(path, bundle, examples);
        std::size_t pairs = pairs_of(examples).size();
        manifest["splits"][opts.split] = {{"count", examples.size()},
                                          {"pairs", pairs},
                                          {"file", opts.split + ".jsonl"}};
        total_examples += examples.size();
        total_pairs += pairs;
        std::cerr << "generated " << examples.size() << " " << opts.split << " examples ("
                  << pairs << " pairs)\n";
    }
    manifest["total_examples"] = total_examples;
    manifest["total_pairs"] = total_pairs;
    std::ofstream mf(out_dir + "/manifest.json", std::ios::trunc);
    mf << manifest.dump(2) << '\n';
    return 0;
}

int cmd_predict(const std::string& dataset, const std::string& data_dir,
                const std::string& split, const std::string& model_spec,
                const std::string& out_path, const std::string& asset_dir) {
    DgpBundle bundle = load_builtin(dataset, asset_dir);
    auto examples = read_jsonl(dataset_path(data_dir, split), bundle);
    auto model = make_model(model_spec, bundle);

    std::map<std::string, std::vector<double>> by_digest;  // dedup shared texts
    auto add = [&](const std::string& text) {
        std::string d = text_digest(text);
        if (!by_digest.count(d)) by_digest[d] = model->predict(text).probs;
    };
    for (const auto& ex : examples) {
        add(ex.text);
        for (const auto& cf : ex.counterfactuals) add(cf.text);
    }
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw MalformedAssetFile("cannot open for writing: " + out_path);
    for (const auto& [digest, probs] : by_digest)
        out << json{{"text_digest", digest}, {"probs", probs}}.dump() << '\n';
    std::cerr << "predicted " << by_digest.size() << " unique texts with " << model->id()
              << "\n";
    return 0;
}

int cmd_explain(const std::string& dataset, const std::string& data_dir,
                const std::string& methods_csv, const std::string& model_spec,
                const std::string& predictor_spec, const std::string& embedder_spec,
                const std::string& strategy_name_str, const std::string& llm_url,
                const std::string& llm_model, const std::string& cache_dir,
                const std::string& out_path, std::uint64_t seed, std::size_t k,
                const std::string& asset_dir) {
    DgpBundle bundle = load_builtin(dataset, asset_dir);
    auto test = read_jsonl(dataset_path(data_dir, "test"), bundle);
    auto model = make_model(model_spec, bundle);
    auto predictor = make_predictor(predictor_spec, bundle);
    auto embedder = make_embedder(embedder_spec, bundle);

    std::vector<Example> pool_examples;
    if (std::filesystem::exists(dataset_path(data_dir, "method")))
        pool_examples = read_jsonl(dataset_path(data_dir, "method"), bundle);
    else
        pool_examples = test;
    auto pool = CandidatePool::build(bundle, pool_examples, *model, *predictor, *embedder);

    std::unique_ptr<CounterfactualGenerator> generator;
    CfStrategy strategy = parse_strategy(strategy_name_str);
    auto methods = split_list(methods_csv);
    for (const auto& m : methods)
        if (m == "cfgen") {
            if (llm_url.empty())
                generator = std::make_unique<StructuralCfGenerator>(test);
            else
                generator = std::make_unique<LlmCfGenerator>(LlmEndpoint{llm_url, llm_model},
                                                             cache_dir);
        }

    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw MalformedAssetFile("cannot open for writing: " + out_path);
    std::size_t n = 0;
    for (const auto& ex : test) {
        QueryPoint x{ex.id,
                     ex.text,
                     ex.assignment,
                     predictor->predict_concepts(ex.text),
                     embedder->embed(ex.text).vec,
                     model->predict(ex.text)};
        for (const auto& cf : ex.counterfactuals) {
            for (const auto& method : methods) {
                ExplanationVector ev;
                try {
                    if (method == "semantic")
                        ev = explain_semantic_match(pool, x, cf.change, embedder->id(), k);
                    else if (method == "approx")
                        ev = explain_approx(pool, x, cf.change, seed, k);
                    else if (method == "convecs")
                        ev = explain_convecs(pool, x, cf.change, k);
                    else if (method == "cfgen")
                        ev = explain_cfgen(*generator, *model, bundle, x, cf.change, strategy);
                    else
                        throw CLI::ValidationError("--methods", "unknown method: " + method);
                } catch (const EmptyCandidateSet& err) {
                    std::cerr << "skip " << method << " " << ex.id << " " << cf.change.key()
                              << ": " << err.what() << "\n";
                    continue;
                }
                out << json{{"example_id", ev.example_id},
                            {"concept", ev.change.concept_name},
                            {"from", ev.change.from_code},
                            {"to", ev.change.to_code},
                            {"method_id", ev.method_id},
                            {"delta", ev.delta}}
                           .dump()
                    << '\n';
                ++n;
            }
        }
    }
    std::cerr << "wrote " << n << " explanations\n";
    return 0;
}

int cmd_evaluate(const std::string& dataset, const std::string& data_dir,
                 const std::string& predictions_path, const std::string& explanations_path,
                 const std::string& report_dir, const std::string& asset_dir) {
    DgpBundle bundle = load_builtin(dataset, asset_dir);
    auto test = read_jsonl(dataset_path(data_dir, "test"), bundle);
    FileModel model(predictions_path, "file-model");

    // reference ICaCEs from stored predictions
    std::vector<IcaceVector> refs;
    std::map<std::string, std::vector<std::vector<double>>> caces_by_concept;
    std::map<std::string, std::vector<IcaceVector>> icaces_by_concept;
    for (const auto& ex : test) {
        auto fx = model.predict(ex.text);
        for (const auto& cf : ex.counterfactuals) {
            auto v = icace(fx, model.predict(cf.text));
            v.example_id = ex.id;
            v.change = cf.change;
            caces_by_concept[cf.change.concept_name].push_back(v.delta);
            icaces_by_concept[cf.change.concept_name].push_back(v);
            refs.push_back(std::move(v));
        }
    }

    // explanations grouped by method
    std::ifstream in(explanations_path);
    if (!in) throw MalformedAssetFile("cannot open: " + explanations_path);
    std::map<std::string, std::vector<ExplanationVector>> by_method;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            json j = json::parse(line);
            ExplanationVector ev;
            ev.example_id = j.at("example_id").get<std::string>();
            ev.change = {j.at("concept").get<std::string>(), j.at("from").get<int>(),
                         j.at("to").get<int>()};
            ev.method_id = j.at("method_id").get<std::string>();
            ev.delta = j.at("delta").get<std::vector<double>>();
            by_method[ev.method_id].push_back(std::move(ev));
        } catch (const json::exception& e) {
            throw CorruptLine(lineno, e.what());
        }
    }

    EvaluationReport report;
    report.dataset = dataset;
    report.model_id = model.id();
    report.graph_digest = bundle.graph.digest();
    report.gold_importance = global_importance(caces_by_concept);
    for (const auto& [name, vecs] : icaces_by_concept)
        report.sensitivities[name] = sensitivity(vecs);
    for (const auto& c : bundle.graph.concepts()) {
        if (c.name == bundle.graph.outcome()) continue;
        try {
            report.true_effects[c.name] =
                true_effect_mc(bundle.graph, c.name, 100000, 0);
        } catch (const NotIdentifiable&) {
            report.true_effects[c.name] = std::nullopt;
        }
    }
    for (auto& [method, expls] : by_method) {
        MethodResult r;
        r.method_id = method;
        // keep only references that this method explained
        std::set<std::pair<std::string, std::string>> have;
        for (const auto& e : expls) have.insert({e.example_id, e.change.key()});
        std::vector<IcaceVector> covered;
        for (const auto& ref : refs)
            if (have.count({ref.example_id, ref.change.key()})) covered.push_back(ref);
        r.local = aggregate_local(covered, expls);
        std::map<std::string, std::vector<std::vector<double>>> method_caces;
        for (const auto& e : expls) method_caces[e.change.concept_name].push_back(e.delta);
        r.importance = global_importance(method_caces);
        std::map<std::string, double> gold_subset;
        for (const auto& [name, score] : r.importance)
            gold_subset[name] = report.gold_importance.at(name);
        r.global_of = global_of(gold_subset, r.importance);
        report.methods.push_back(std::move(r));
    }
    write_report(report, report_dir);
    std::cerr << "report written to " << report_dir << "\n";
    return 0;
}

int cmd_true_effects(const std::string& dataset, std::size_t samples, std::uint64_t seed,
                     const std::string& out_path, bool population,
                     const std::string& asset_dir) {
    DgpBundle bundle = load_builtin(dataset, asset_dir);
    TrueEffectKind kind = population ? TrueEffectKind::population : TrueEffectKind::individual;
    std::ostringstream body;
    body << "dataset,concept,true_effect\n";
    for (const auto& c : bundle.graph.concepts()) {
        if (c.name == bundle.graph.outcome()) continue;
        body << dataset << "," << c.name << ",";
        try {
            double v = true_effect_mc(bundle.graph, c.name, samples, seed, kind);
            body.precision(6);
            body << v;
        } catch (const NotIdentifiable&) {
            body << "not_identifiable";
        }
        body << "\n";
    }
    if (out_path.empty()) {
        std::cout << body.str();
    } else {
        std::ofstream out(out_path, std::ios::trunc);
        out << body.str();
        if (!out) throw MalformedAssetFile("write failed: " + out_path);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Causal-explainability benchmark pipeline"};
    app.require_subcommand(1);

    std::string dataset, sizes = "100,20,50,30", renderer = "deterministic";
    std::string out_dir = "data", asset_dir, llm_url, llm_model = "default";
    std::string cache_dir = "cache", split = "test";
    std::string model_spec = "oracle:2", predictor_spec = "gold", embedder_spec = "markers";
    std::string methods = "semantic", strategy = "mediators_confounders";
    std::string predictions = "predictions.jsonl", explanations = "explanations.jsonl";
    std::string report_dir = "report", out_path;
    std::uint64_t seed = 0;
    std::size_t cf_n = 3, jobs = 1, k = 3, samples = 1000000;
    bool population = false;

    auto add_dataset = [&](CLI::App* cmd) {
        cmd->add_option("--dataset", dataset, "violence | disease | cv")->required();
        cmd->add_option("--assets", asset_dir, "optional asset directory");
    };

    auto* g = app.add_subcommand("generate", "sample a dataset and render its texts");
    add_dataset(g);
    g->add_option("--sizes", sizes, "comma list: train,dev,test,method counts");
    g->add_option("--seed", seed);
    g->add_option("--renderer", renderer, "deterministic | llm");
    g->add_option("--out", out_dir);
    g->add_option("--llm-url", llm_url);
    g->add_option("--llm-model", llm_model);
    g->add_option("--cache", cache_dir);
    g->add_option("--counterfactuals", cf_n, "counterfactuals per example");
    g->add_option("--jobs", jobs);

    auto* p = app.add_subcommand("predict", "run the explained model over a split");
    add_dataset(p);
    p->add_option("--data", out_dir);
    p->add_option("--split", split);
    p->add_option("--model", model_spec, "oracle[:kappa] | file:<path> | remote:<url>");
    p->add_option("--out", predictions);

    auto* x = app.add_subcommand("explain", "produce explanation vectors for the test split");
    add_dataset(x);
    x->add_option("--data", out_dir);
    x->add_option("--methods", methods, "comma list: semantic,approx,convecs,cfgen");
    x->add_option("--model", model_spec);
    x->add_option("--concepts", predictor_spec, "gold | file:<path> | remote:<url>");
    x->add_option("--embedder", embedder_spec, "markers | file:<path> | remote:<url>");
    x->add_option("--strategy", strategy);
    x->add_option("--llm-url", llm_url);
    x->add_option("--llm-model", llm_model);
    x->add_option("--cache", cache_dir);
    x->add_option("--out", explanations);
    x->add_option("--seed", seed);
    x->add_option("--k", k);

    auto* e = app.add_subcommand("evaluate", "aggregate metrics into a report");
    add_dataset(e);
    e->add_option("--data", out_dir);
    e->add_option("--predictions", predictions);
    e->add_option("--explanations", explanations);
    e->add_option("--report", report_dir);

    auto* t = app.add_subcommand("true-effects", "Monte-Carlo concept effects on the outcome");
    add_dataset(t);
    t->add_option("--samples", samples);
    t->add_option("--seed", seed);
    t->add_option("--out", out_path);
    t->add_flag("--population", population, "population-level definition");

    try {
        app.parse(argc, argv);
        if (g->parsed())
            return cmd_generate(dataset, sizes, seed, renderer, out_dir, asset_dir, llm_url,
                                llm_model, cache_dir, cf_n, jobs);
        if (p->parsed())
            return cmd_predict(dataset, out_dir, split, model_spec, predictions, asset_dir);
        if (x->parsed())
            return cmd_explain(dataset, out_dir, methods, model_spec, predictor_spec,
                               embedder_spec, strategy, llm_url, llm_model, cache_dir,
                               explanations, seed, k, asset_dir);
        if (e->parsed())
            return cmd_evaluate(dataset, out_dir, predictions, explanations, report_dir,
                                asset_dir);
        if (t->parsed())
            return cmd_true_effects(dataset, samples, seed, out_path, population, asset_dir);
        return kExitConfig;
    } catch (const CLI::ParseError& err) {
        int code = app.exit(err);
        return code == 0 ? 0 : kExitConfig;
    } catch (const UnknownDataset& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitConfig;
    } catch (const UnknownStrategy& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitConfig;
    } catch (const SchemaVersionMismatch& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitIntegrity;
    } catch (const GraphDigestMismatch& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitIntegrity;
    } catch (const EndpointUnreachable& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitRemote;
    } catch (const NonZeroTemperature& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitRemote;
    } catch (const EmptyCompletion& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitRemote;
    } catch (const MalformedResponse& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitRemote;
    } catch (const Error& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitUpstream;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitConfig;
    }
}
