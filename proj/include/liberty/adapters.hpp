#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "liberty/dgp.hpp"
#include "liberty/render.hpp"

namespace liberty {

struct PredictionVector {
    std::vector<double> probs;  // simplex over Y classes
    std::string model_id;

    bool operator==(const PredictionVector&) const = default;
};

// Validates a probability vector: entries >= 0 and sum 1 within 1e-6.
// A drift up to 1e-3 is renormalized with a warning; worse is rejected.
PredictionVector make_prediction(std::vector<double> probs, std::string model_id);

struct ConceptPrediction {
    std::map<std::string, std::vector<double>> per_concept;  // simplex per concept
};

struct EmbeddingVector {
    std::vector<double> vec;
    std::string provider_id;
};

class Model {
public:
    virtual ~Model() = default;
    virtual PredictionVector predict(const std::string& text) = 0;
    virtual std::string id() const = 0;
};

class ConceptPredictor {
public:
    virtual ~ConceptPredictor() = default;
    virtual ConceptPrediction predict_concepts(const std::string& text) = 0;
    virtual std::string id() const = 0;
};

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual EmbeddingVector embed(const std::string& text) = 0;
    virtual std::string id() const = 0;
};

// Closed-loop explained model: reads concept values from the deterministic
// renderer's markers and scores class y as
//   s_y = kappa * 1{y == Y} + sum_C weight_C * code(C) * 1{y == target_class_C}
// then softmaxes. Its ICaCE is analytically known for any pair, which real
// explained models cannot offer.
class OracleModel : public Model {
public:
    struct ConceptWeight {
        double weight;
        int target_class;
    };

    OracleModel(const DgpBundle& bundle, double kappa,
                std::map<std::string, ConceptWeight> weights = {});

    PredictionVector predict(const std::string& text) override;
    std::string id() const override { return id_; }

    PredictionVector predict_assignment(const ConceptAssignment& assignment) const;
    // reference ICaCE in closed form: softmax difference of the two scores
    std::vector<double> analytic_icace(const ConceptAssignment& factual,
                                       const ConceptAssignment& counterfactual) const;

private:
    std::vector<double> scores(const ConceptAssignment& assignment) const;

    const DgpBundle& bundle_;
    double kappa_;
    std::map<std::string, ConceptWeight> weights_;
    std::string id_;
};

// Gold concept predictor for deterministic-renderer texts: one-hot vectors
// recovered from the marker grammar.
class GoldConceptPredictor : public ConceptPredictor {
public:
    explicit GoldConceptPredictor(const DgpBundle& bundle) : bundle_(bundle) {}
    ConceptPrediction predict_concepts(const std::string& text) override;
    std::string id() const override { return "gold-concepts"; }

private:
    const DgpBundle& bundle_;
};

// Concatenated one-hot concept blocks, in concept declaration order.
class BagOfMarkersEmbedder : public Embedder {
public:
    explicit BagOfMarkersEmbedder(const DgpBundle& bundle) : bundle_(bundle) {}
    EmbeddingVector embed(const std::string& text) override;
    std::string id() const override { return "bag-of-markers"; }
    // block offset and width for one concept within the embedding
    std::pair<std::size_t, std::size_t> block(const std::string& concept_name) const;

private:
    const DgpBundle& bundle_;
};

// File-backed adapters; stores are JSONL of {text_digest, ...} records.
class FileModel : public Model {
public:
    FileModel(const std::string& path, std::string model_id);
    PredictionVector predict(const std::string& text) override;
    std::string id() const override { return id_; }

private:
    std::map<std::string, std::vector<double>> by_digest_;
    std::string id_;
};

class FileConceptPredictor : public ConceptPredictor {
public:
    FileConceptPredictor(const std::string& path, const DgpBundle& bundle);
    ConceptPrediction predict_concepts(const std::string& text) override;
    std::string id() const override { return "file-concepts"; }

private:
    std::map<std::string, ConceptPrediction> by_digest_;
    const DgpBundle& bundle_;
};

class FileEmbedder : public Embedder {
public:
    FileEmbedder(const std::string& path, std::string provider_id);
    EmbeddingVector embed(const std::string& text) override;
    std::string id() const override { return id_; }

private:
    std::map<std::string, std::vector<double>> by_digest_;
    std::string id_;
};

struct RemoteEndpoint {
    std::string base_url;
    std::string api_key_env = "LIBERTY_API_KEY";
    int max_retries = 3;
    int initial_backoff_ms = 250;
};

// Remote adapters speak a one-POST-per-batch JSON protocol:
//   POST /predict           {"texts": [...]} -> {"results": [{"probs": [...]}]}
//   POST /predict_concepts  {"texts": [...]} -> {"results": [{"<concept>": [...]}]}
//   POST /embed             {"texts": [...]} -> {"results": [{"vec": [...]}]}
// Responses are cached by text digest.
class RemoteModel : public Model {
public:
    RemoteModel(RemoteEndpoint endpoint, std::string model_id);
    PredictionVector predict(const std::string& text) override;
    std::string id() const override { return id_; }

private:
    RemoteEndpoint endpoint_;
    std::string id_;
    std::mutex mu_;
    std::map<std::string, std::vector<double>> cache_;
};

class RemoteConceptPredictor : public ConceptPredictor {
public:
    RemoteConceptPredictor(RemoteEndpoint endpoint, const DgpBundle& bundle);
    ConceptPrediction predict_concepts(const std::string& text) override;
    std::string id() const override { return "remote-concepts"; }

private:
    RemoteEndpoint endpoint_;
    const DgpBundle& bundle_;
    std::mutex mu_;
    std::map<std::string, ConceptPrediction> cache_;
};

class RemoteEmbedder : public Embedder {
public:
    RemoteEmbedder(RemoteEndpoint endpoint, std::string provider_id);
    EmbeddingVector embed(const std::string& text) override;
    std::string id() const override { return id_; }

private:
    RemoteEndpoint endpoint_;
    std::string id_;
    std::mutex mu_;
    std::map<std::string, std::vector<double>> cache_;
    std::size_t dim_ = 0;  // 0 until first response
};

// shared text digest used by all file-backed stores
std::string text_digest(const std::string& text);

}  // namespace liberty
