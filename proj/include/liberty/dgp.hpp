#pragma once

#include <map>
#include <string>
#include <vector>

#include "liberty/rng.hpp"
#include "liberty/scm.hpp"

namespace liberty {

struct GroundingAsset {
    std::string id;
    enum class Kind { persona, template_text } kind;
    std::string body;
    std::string dataset;
};

// One of the three built-in data-generating processes: a validated graph,
// verbalization map, grounding asset pools, and prompt templates.
struct DgpBundle {
    std::string name;  // violence | disease | cv
    ScmGraph graph;
    std::map<std::pair<std::string, int>, std::string> verbalizer;
    std::vector<GroundingAsset> persona_pool;
    std::vector<GroundingAsset> template_pool;
    std::map<std::string, std::string> prompt_set;
    std::string prompt_version = "v1";

    const std::string& verbalize(const std::string& concept_name, int code) const;
    const GroundingAsset& persona(const std::string& id) const;
    const GroundingAsset& template_asset(const std::string& id) const;
    std::vector<std::string> persona_ids() const;
    std::vector<std::string> template_ids() const;
};

// Loads one of {violence, disease, cv}. When asset_dir contains
// assets/<name>/{personas,templates,prompts}/*.txt those files are used;
// otherwise a bundled synthetic pool (>= 20 of each) stands in.
DgpBundle load_builtin(const std::string& name, const std::string& asset_dir = "");

std::vector<std::string> builtin_dataset_names();

// Raw JSON text of the built-in graph definitions (the literal transcriptions).
const std::string& builtin_graph_json(const std::string& name);

std::pair<GroundingAsset, GroundingAsset> sample_grounding(const DgpBundle& bundle, Rng& rng);

}  // namespace liberty
