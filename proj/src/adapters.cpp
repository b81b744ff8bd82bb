#include "liberty/adapters.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "liberty/sha256.hpp"

namespace liberty {

using nlohmann::json;

std::string text_digest(const std::string& text) { return sha256_hex(text); }

PredictionVector make_prediction(std::vector<double> probs, std::string model_id) {
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0) || !std::isfinite(p))
            throw MalformedResponse("probability entries must be finite and >= 0");
        sum += p;
    }
    double drift = std::abs(sum - 1.0);
    if (drift > 1e-3)
        throw MalformedResponse("probability vector sums to " + std::to_string(sum));
    if (drift > 1e-6) {
        std::cerr << "warning: renormalizing probability vector from " << model_id
                  << " (sum " << sum << ")\n";
        for (double& p : probs) p /= sum;
    }
    return {std::move(probs), std::move(model_id)};
}

namespace {

std::vector<double> softmax(const std::vector<double>& scores) {
    double m = *std::max_element(scores.begin(), scores.end());
    std::vector<double> out(scores.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - m);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

std::vector<double> simplex_check(std::vector<double> v, const std::string& what) {
    double sum = 0.0;
    for (double p : v) {
        if (!(p >= 0.0) || !std::isfinite(p))
            throw MalformedResponse(what + ": entries must be finite and >= 0");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-3)
        throw MalformedResponse(what + ": simplex sums to " + std::to_string(sum));
    if (std::abs(sum - 1.0) > 1e-6)
        for (double& p : v) p /= sum;
    return v;
}

json post_json(const RemoteEndpoint& endpoint, const std::string& path, const json& body) {
    httplib::Client client(endpoint.base_url);
    client.set_read_timeout(120, 0);
    httplib::Headers headers;
    if (const char* key = std::getenv(endpoint.api_key_env.c_str()))
        headers.emplace("Authorization", std::string("Bearer ") + key);

    int backoff = endpoint.initial_backoff_ms;
    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt <= endpoint.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
            backoff *= 2;
        }
        auto res = client.Post(path, headers, body.dump(), "application/json");
        if (!res) {
            last_error = "connection failed";
            continue;
        }
        if (res->status >= 500 || res->status == 429) {
            last_error = "status " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200)
            throw EndpointUnreachable(path + " failed with status " +
                                      std::to_string(res->status));
        try {
            return json::parse(res->body);
        } catch (const json::exception& e) {
            throw MalformedResponse(path + ": invalid JSON response: " + e.what());
        }
    }
    throw EndpointUnreachable(path + " failed after retries: " + last_error);
}

}  // namespace

OracleModel::OracleModel(const DgpBundle& bundle, double kappa,
                         std::map<std::string, ConceptWeight> weights)
    : bundle_(bundle), kappa_(kappa), weights_(std::move(weights)),
      id_("oracle/kappa=" + std::to_string(kappa)) {}

std::vector<double> OracleModel::scores(const ConceptAssignment& assignment) const {
    const auto& outcome = bundle_.graph.concept_spec(bundle_.graph.outcome());
    std::vector<double> s(static_cast<std::size_t>(outcome.num_codes()), 0.0);
    int y = assignment.values.at(outcome.name);
    s[std::size_t(y)] += kappa_;
    for (const auto& [concept_name, w] : weights_) {
        int code = assignment.values.at(concept_name);
        s[std::size_t(w.target_class)] += w.weight * code;
    }
    return s;
}

PredictionVector OracleModel::predict_assignment(const ConceptAssignment& assignment) const {
    return {softmax(scores(assignment)), id_};
}

PredictionVector OracleModel::predict(const std::string& text) {
    return predict_assignment(recover_assignment(bundle_, text));
}

std::vector<double> OracleModel::analytic_icace(const ConceptAssignment& factual,
                                                const ConceptAssignment& counterfactual) const {
    auto pf = softmax(scores(factual));
    auto pc = softmax(scores(counterfactual));
    std::vector<double> delta(pf.size());
    for (std::size_t i = 0; i < pf.size(); ++i) delta[i] = pc[i] - pf[i];
    return delta;
}

ConceptPrediction GoldConceptPredictor::predict_concepts(const std::string& text) {
    auto assignment = recover_assignment(bundle_, text);
    ConceptPrediction out;
    for (const auto& c : bundle_.graph.concepts()) {
        std::vector<double> onehot(static_cast<std::size_t>(c.num_codes()), 0.0);
        onehot[std::size_t(assignment.values.at(c.name))] = 1.0;
        out.per_concept[c.name] = std::move(onehot);
    }
    return out;
}

std::pair<std::size_t, std::size_t> BagOfMarkersEmbedder::block(const std::string& concept_name) const {
    std::size_t offset = 0;
    for (const auto& c : bundle_.graph.concepts()) {
        if (c.name == concept_name) return {offset, static_cast<std::size_t>(c.num_codes())};
        offset += static_cast<std::size_t>(c.num_codes());
    }
    throw UnknownConcept("unknown concept: " + concept_name);
}

EmbeddingVector BagOfMarkersEmbedder::embed(const std::string& text) {
    auto assignment = recover_assignment(bundle_, text);
    std::vector<double> vec;
    for (const auto& c : bundle_.graph.concepts()) {
        std::vector<double> onehot(static_cast<std::size_t>(c.num_codes()), 0.0);
        onehot[std::size_t(assignment.values.at(c.name))] = 1.0;
        vec.insert(vec.end(), onehot.begin(), onehot.end());
    }
    return {std::move(vec), id()};
}

FileModel::FileModel(const std::string& path, std::string model_id) : id_(std::move(model_id)) {
    std::ifstream in(path);
    if (!in) throw UnknownText("cannot open prediction store: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            json j = json::parse(line);
            by_digest_[j.at("text_digest").get<std::string>()] =
                j.at("probs").get<std::vector<double>>();
        } catch (const json::exception& e) {
            throw CorruptLine(lineno, e.what());
        }
    }
}

PredictionVector FileModel::predict(const std::string& text) {
    auto it = by_digest_.find(text_digest(text));
    if (it == by_digest_.end())
        throw UnknownText("no stored prediction for text digest " + text_digest(text));
    return make_prediction(it->second, id_);
}

FileConceptPredictor::FileConceptPredictor(const std::string& path, const DgpBundle& bundle)
    : bundle_(bundle) {
    std::ifstream in(path);
    if (!in) throw UnknownText("cannot open concept store: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            json j = json::parse(line);
            ConceptPrediction p;
            const json& per = j.at("concepts");
            for (const auto& c : bundle_.graph.concepts()) {
                if (!per.contains(c.name))
                    throw MalformedResponse("concept store is missing concept " + c.name);
                p.per_concept[c.name] =
                    simplex_check(per.at(c.name).get<std::vector<double>>(), c.name);
            }
            by_digest_[j.at("text_digest").get<std::string>()] = std::move(p);
        } catch (const json::exception& e) {
            throw CorruptLine(lineno, e.what());
        }
    }
}

ConceptPrediction FileConceptPredictor::predict_concepts(const std::string& text) {
    auto it = by_digest_.find(text_digest(text));
    if (it == by_digest_.end())
        throw UnknownText("no stored concept prediction for text digest " + text_digest(text));
    return it->second;
}

FileEmbedder::FileEmbedder(const std::string& path, std::string provider_id)
    : id_(std::move(provider_id)) {
    std::ifstream in(path);
    if (!in) throw UnknownText("cannot open embedding store: " + path);
    std::string line;
    std::size_t lineno = 0;
    std::size_t dim = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            json j = json::parse(line);
            auto vec = j.at("vec").get<std::vector<double>>();
            if (dim == 0) dim = vec.size();
            if (vec.size() != dim)
                throw MalformedResponse("embedding dimension mismatch in store at line " +
                                        std::to_string(lineno));
            by_digest_[j.at("text_digest").get<std::string>()] = std::move(vec);
        } catch (const json::exception& e) {
            throw CorruptLine(lineno, e.what());
        }
    }
}

EmbeddingVector FileEmbedder::embed(const std::string& text) {
    auto it = by_digest_.find(text_digest(text));
    if (it == by_digest_.end())
        throw UnknownText("no stored embedding for text digest " + text_digest(text));
    return {it->second, id_};
}

RemoteModel::RemoteModel(RemoteEndpoint endpoint, std::string model_id)
    : endpoint_(std::move(endpoint)), id_(std::move(model_id)) {}

PredictionVector RemoteModel::predict(const std::string& text) {
    std::string digest = text_digest(text);
    {
        std::lock_guard lock(mu_);
        if (auto it = cache_.find(digest); it != cache_.end())
            return make_prediction(it->second, id_);
    }
    json reply = post_json(endpoint_, "/predict", {{"texts", json::array({text})}});
    std::vector<double> probs;
    try {
        probs = reply.at("results").at(0).at("probs").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw MalformedResponse(std::string("/predict response: ") + e.what());
    }
    auto pv = make_prediction(probs, id_);
    std::lock_guard lock(mu_);
    cache_[digest] = pv.probs;
    return pv;
}

RemoteConceptPredictor::RemoteConceptPredictor(RemoteEndpoint endpoint, const DgpBundle& bundle)
    : endpoint_(std::move(endpoint)), bundle_(bundle) {}

ConceptPrediction RemoteConceptPredictor::predict_concepts(const std::string& text) {
    std::string digest = text_digest(text);
    {
        std::lock_guard lock(mu_);
        if (auto it = cache_.find(digest); it != cache_.end()) return it->second;
    }
    json reply = post_json(endpoint_, "/predict_concepts", {{"texts", json::array({text})}});
    ConceptPrediction p;
    try {
        const json& r = reply.at("results").at(0);
        for (const auto& c : bundle_.graph.concepts()) {
            if (!r.contains(c.name))
                throw MalformedResponse("/predict_concepts response is missing concept " +
                                        c.name);
            p.per_concept[c.name] = simplex_check(r.at(c.name).get<std::vector<double>>(),
                                                  c.name);
        }
    } catch (const json::exception& e) {
        throw MalformedResponse(std::string("/predict_concepts response: ") + e.what());
    }
    std::lock_guard lock(mu_);
    cache_[digest] = p;
    return p;
}

RemoteEmbedder::RemoteEmbedder(RemoteEndpoint endpoint, std::string provider_id)
    : endpoint_(std::move(endpoint)), id_(std::move(provider_id)) {}

EmbeddingVector RemoteEmbedder::embed(const std::string& text) {
    std::string digest = text_digest(text);
    {
        std::lock_guard lock(mu_);
        if (auto it = cache_.find(digest); it != cache_.end()) return {it->second, id_};
    }
    json reply = post_json(endpoint_, "/embed", {{"texts", json::array({text})}});
    std::vector<double> vec;
    try {
        vec = reply.at("results").at(0).at("vec").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw MalformedResponse(std::string("/embed response: ") + e.what());
    }
    for (double x : vec)
        if (!std::isfinite(x)) throw MalformedResponse("/embed returned a non-finite entry");
    std::lock_guard lock(mu_);
    if (dim_ == 0) dim_ = vec.size();
    if (vec.size() != dim_)
        throw MalformedResponse("embedding dimension changed across calls: " +
                                std::to_string(vec.size()) + " vs " + std::to_string(dim_));
    cache_[digest] = vec;
    return {std::move(vec), id_};
}

}  // namespace liberty
