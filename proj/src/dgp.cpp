#include "liberty/dgp.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "liberty/rng.hpp"

namespace liberty {

namespace fs = std::filesystem;

namespace {

const std::string kViolenceGraph = R"JSON({
  "name": "violence",
  "outcome_in_change_set": false,
  "concepts": [
    {"name": "Gender", "values": [{"code": 0, "label": "Female"}, {"code": 1, "label": "Male"}]},
    {"name": "Age", "values": [{"code": 0, "label": "24-32"}, {"code": 1, "label": "34-44"}, {"code": 2, "label": "46-55"}]},
    {"name": "Race", "values": [{"code": 0, "label": "African American"}, {"code": 1, "label": "Hispanic"}, {"code": 2, "label": "White"}, {"code": 3, "label": "Asian"}]},
    {"name": "Tenure", "values": [{"code": 0, "label": "4-9"}, {"code": 1, "label": "10-19"}, {"code": 2, "label": "20-25"}]},
    {"name": "License", "values": [{"code": 0, "label": "LPN"}, {"code": 1, "label": "RN"}, {"code": 2, "label": "APRN"}]},
    {"name": "Department", "values": [{"code": 0, "label": "Family Practice"}, {"code": 1, "label": "ICU"}, {"code": 2, "label": "Psychiatric/Mental Health"}, {"code": 3, "label": "Emergency"}]},
    {"name": "Seniority", "values": [{"code": 0, "label": "General Staff"}, {"code": 1, "label": "Experienced Staff"}, {"code": 2, "label": "Middle Management"}, {"code": 3, "label": "Senior Management"}]},
    {"name": "Violence", "role": "outcome", "values": [{"code": 0, "label": "No Violence"}, {"code": 1, "label": "Verbal Violence"}, {"code": 2, "label": "Physical Violence"}]}
  ],
  "edges": [
    ["Age", "Tenure"],
    ["Gender", "License"], ["Race", "License"], ["Age", "License"],
    ["Gender", "Department"], ["Race", "Department"],
    ["Age", "Seniority"], ["Gender", "Seniority"], ["Race", "Seniority"], ["Tenure", "Seniority"], ["License", "Seniority"],
    ["Gender", "Violence"], ["Age", "Violence"], ["Race", "Violence"], ["Tenure", "Violence"], ["License", "Violence"], ["Department", "Violence"], ["Seniority", "Violence"]
  ],
  "priors": [
    {"concept": "Gender", "probs": [0.5, 0.5]},
    {"concept": "Age", "probs": [0.25, 0.5, 0.25]},
    {"concept": "Race", "probs": [0.25, 0.25, 0.25, 0.25]}
  ],
  "equations": [
    {"target": "Tenure", "terms": [{"parent": "Age", "weight": 0.8}], "intercept": 0.0, "noise": {"mean": 0.05, "std": 0.5}, "clamp": [0, 2]},
    {"target": "License", "terms": [{"parent": "Gender", "weight": 0.3}, {"parent": "Race", "weight": 0.3}, {"parent": "Age", "weight": 0.2}], "intercept": 0.0, "noise": {"mean": 0.0, "std": 0.5}, "clamp": [0, 2]},
    {"target": "Department", "terms": [{"parent": "Gender", "weight": 0.5}, {"parent": "Race", "weight": 0.4}], "intercept": 0.4, "noise": {"mean": 0.2, "std": 0.5}, "clamp": [0, 3]},
    {"target": "Seniority", "terms": [{"parent": "Age", "weight": 0.4}, {"parent": "Gender", "weight": 0.1}, {"parent": "Race", "weight": 0.1}, {"parent": "Tenure", "weight": 0.3}, {"parent": "License", "weight": 0.3}], "intercept": 0.0, "noise": {"mean": 0.0, "std": 0.5}, "clamp": [0, 3]},
    {"target": "Violence", "terms": [{"parent": "Gender", "weight": 0.5}, {"parent": "Department", "weight": 0.5}, {"parent": "Age", "weight": -0.2}, {"parent": "Race", "weight": -0.2}, {"parent": "License", "weight": -0.2}, {"parent": "Tenure", "weight": -0.2}, {"parent": "Seniority", "weight": -0.2}], "intercept": 0.8, "noise": {"mean": 0.3, "std": 0.2}, "clamp": [0, 2]}
  ]
})JSON";

const std::string kDiseaseGraph = R"JSON({
  "name": "disease",
  "outcome_in_change_set": true,
  "concepts": [
    {"name": "Disease", "role": "outcome", "values": [{"code": 0, "label": "Migraine"}, {"code": 1, "label": "Sinusitis"}, {"code": 2, "label": "Influenza"}]},
    {"name": "Dizziness", "values": [{"code": 0, "label": "Absent"}, {"code": 1, "label": "Mild"}, {"code": 2, "label": "Strong"}]},
    {"name": "LightSensitivity", "values": [{"code": 0, "label": "Absent"}, {"code": 1, "label": "Mild"}, {"code": 2, "label": "Strong"}]},
    {"name": "FacialPain", "values": [{"code": 0, "label": "Absent"}, {"code": 1, "label": "Mild"}, {"code": 2, "label": "Strong"}]},
    {"name": "Weakness", "values": [{"code": 0, "label": "Absent"}, {"code": 1, "label": "Mild"}, {"code": 2, "label": "Strong"}]},
    {"name": "Fever", "values": [{"code": 0, "label": "Absent"}, {"code": 1, "label": "Mild"}, {"code": 2, "label": "Strong"}]},
    {"name": "NasalCongestion", "values": [{"code": 0, "label": "Absent"}, {"code": 1, "label": "Mild"}, {"code": 2, "label": "Strong"}]},
    {"name": "Headache", "values": [{"code": 0, "label": "Absent"}, {"code": 1, "label": "Mild"}, {"code": 2, "label": "Strong"}]}
  ],
  "edges": [
    ["Disease", "Dizziness"], ["Disease", "LightSensitivity"], ["Disease", "FacialPain"],
    ["Disease", "Weakness"], ["Disease", "Fever"], ["Disease", "NasalCongestion"], ["Disease", "Headache"],
    ["LightSensitivity", "Headache"], ["NasalCongestion", "Headache"]
  ],
  "priors": [
    {"concept": "Disease", "probs": [0.3333333333333333, 0.3333333333333333, 0.3333333333333333]}
  ],
  "equations": [
    {"target": "Dizziness", "terms": [{"parent": "Disease", "kind": "indicator", "code": 0, "weight": 0.9}], "intercept": 0.0, "noise": {"mean": -0.1, "std": 0.6}, "clamp": [0, 2]},
    {"target": "LightSensitivity", "terms": [{"parent": "Disease", "kind": "indicator", "code": 0, "weight": 0.9}], "intercept": 0.0, "noise": {"mean": 0.2, "std": 0.5}, "clamp": [0, 2]},
    {"target": "NasalCongestion", "terms": [{"parent": "Disease", "kind": "indicator", "code": 1, "weight": 0.7}, {"parent": "Disease", "kind": "indicator", "code": 2, "weight": 0.4}], "intercept": 0.0, "noise": {"mean": 0.0, "std": 0.7}, "clamp": [0, 2]},
    {"target": "FacialPain", "terms": [{"parent": "Disease", "kind": "indicator", "code": 1, "weight": 0.8}], "intercept": 0.0, "noise": {"mean": 0.2, "std": 0.6}, "clamp": [0, 2]},
    {"target": "Fever", "terms": [{"parent": "Disease", "kind": "indicator", "code": 1, "weight": 0.4}, {"parent": "Disease", "kind": "indicator", "code": 2, "weight": 0.6}], "intercept": 0.0, "noise": {"mean": 0.0, "std": 0.6}, "clamp": [0, 2]},
    {"target": "Weakness", "terms": [{"parent": "Disease", "kind": "indicator", "code": 2, "weight": 0.7}], "intercept": 0.0, "noise": {"mean": 0.2, "std": 0.6}, "clamp": [0, 2]},
    {"target": "Headache", "terms": [{"parent": "Disease", "kind": "indicator", "code": 0, "weight": 0.7}, {"parent": "Disease", "kind": "indicator", "code": 1, "weight": 0.4}, {"parent": "LightSensitivity", "weight": 0.3}, {"parent": "NasalCongestion", "weight": 0.3}], "intercept": 0.0, "noise": {"mean": -0.1, "std": 0.5}, "clamp": [0, 2]}
  ]
})JSON";

const std::string kCvGraph = R"JSON({
  "name": "cv",
  "outcome_in_change_set": false,
  "concepts": [
    {"name": "Gender", "values": [{"code": 0, "label": "Female"}, {"code": 1, "label": "Male"}]},
    {"name": "Race", "values": [{"code": 0, "label": "Black"}, {"code": 1, "label": "Hispanic"}, {"code": 2, "label": "White"}, {"code": 3, "label": "Asian"}]},
    {"name": "Age", "values": [{"code": 0, "label": "24-32"}, {"code": 1, "label": "33-44"}, {"code": 2, "label": "45-55"}]},
    {"name": "Education", "values": [{"code": 0, "label": "High School"}, {"code": 1, "label": "Bachelor's"}, {"code": 2, "label": "Master's"}, {"code": 3, "label": "Doctorate"}]},
    {"name": "Socioeconomic", "values": [{"code": 0, "label": "Low"}, {"code": 1, "label": "Medium"}, {"code": 2, "label": "High"}]},
    {"name": "WorkExperience", "values": [{"code": 0, "label": "2-5 yrs"}, {"code": 1, "label": "6-10 yrs"}, {"code": 2, "label": "11-25 yrs"}]},
    {"name": "Volunteering", "values": [{"code": 0, "label": "No"}, {"code": 1, "label": "Yes"}]},
    {"name": "Certificates", "values": [{"code": 0, "label": "No"}, {"code": 1, "label": "Yes"}]},
    {"name": "Quality", "role": "outcome", "values": [{"code": 0, "label": "Not recommended"}, {"code": 1, "label": "Potential hire"}, {"code": 2, "label": "Recommended"}]}
  ],
  "edges": [
    ["Gender", "Education"], ["Race", "Education"], ["Age", "Education"],
    ["Education", "Socioeconomic"], ["Age", "Socioeconomic"],
    ["Age", "WorkExperience"], ["Education", "WorkExperience"],
    ["Education", "Volunteering"], ["Socioeconomic", "Volunteering"],
    ["Education", "Certificates"], ["WorkExperience", "Certificates"],
    ["Education", "Quality"], ["Volunteering", "Quality"], ["Certificates", "Quality"], ["WorkExperience", "Quality"]
  ],
  "priors": [
    {"concept": "Gender", "probs": [0.5, 0.5]},
    {"concept": "Race", "probs": [0.25, 0.25, 0.25, 0.25]},
    {"concept": "Age", "probs": [0.25, 0.5, 0.25]}
  ],
  "equations": [
    {"target": "Education", "terms": [{"parent": "Race", "weight": 0.4}, {"parent": "Age", "weight": 0.4}, {"parent": "Gender", "weight": 0.4}], "intercept": 0.0, "noise": {"mean": 0.35, "std": 0.5}, "clamp": [0, 3]},
    {"target": "Socioeconomic", "terms": [{"parent": "Education", "weight": 0.45}, {"parent": "Age", "weight": 0.25}], "intercept": 0.0, "noise": {"mean": 0.25, "std": 0.35}, "clamp": [0, 2]},
    {"target": "WorkExperience", "terms": [{"parent": "Age", "weight": 0.5}, {"parent": "Education", "weight": 0.3}], "intercept": 0.0, "noise": {"mean": 0.0, "std": 0.5}, "clamp": [0, 2]},
    {"target": "Volunteering", "terms": [{"parent": "Education", "weight": 0.2}, {"parent": "Socioeconomic", "weight": 0.3}], "intercept": 0.0, "noise": {"mean": -0.35, "std": 0.2}, "clamp": [0, 1]},
    {"target": "Certificates", "terms": [{"parent": "Education", "weight": 0.15}, {"parent": "WorkExperience", "weight": 0.15}], "intercept": 0.0, "noise": {"mean": 0.0, "std": 0.3}, "clamp": [0, 1]},
    {"target": "Quality", "terms": [{"parent": "Education", "weight": 0.3}, {"parent": "Volunteering", "weight": 0.3}, {"parent": "Certificates", "weight": 0.3}, {"parent": "WorkExperience", "weight": 0.3}], "intercept": 0.0, "noise": {"mean": 0.0, "std": 0.3}, "clamp": [0, 2]}
  ]
})JSON";

struct DatasetText {
    const char* opening;
    const char* closing;
    const char* slot_intro;  // phrase before each concept slot
};

std::string two_digits(std::size_t i) {
    std::string s = std::to_string(i);
    return s.size() < 2 ? "0" + s : s;
}

// Synthetic stand-in pools. Real persona/template files are drop-in
// replacements under assets/<dataset>/{personas,templates}/.
std::vector<GroundingAsset> synth_personas(const std::string& dataset, std::size_t count) {
    static const char* facts[] = {
        "enjoys long-distance cycling on weekends",
        "volunteers at a local community kitchen",
        "is learning to play the cello",
        "collects vintage maps",
        "runs a small book club",
        "grows heirloom tomatoes",
        "is a dedicated amateur astronomer",
        "bakes sourdough every Sunday",
        "coaches a youth soccer team",
        "keeps a daily travel journal",
        "restores old radios",
        "practices watercolor painting",
    };
    std::vector<GroundingAsset> pool;
    for (std::size_t i = 0; i < count; ++i) {
        std::string body = "This person " + std::string(facts[i % 12]) + " and " +
                           std::string(facts[(i + 5) % 12]) + ". Fun fact #" +
                           std::to_string(i + 1) + ": they " + facts[(i + 9) % 12] + ".";
        pool.push_back({"persona-" + two_digits(i), GroundingAsset::Kind::persona, body, dataset});
    }
    return pool;
}

std::vector<GroundingAsset> synth_templates(const ScmGraph& graph, const std::string& dataset,
                                            std::size_t count) {
    static const DatasetText kText[] = {
        {"Thanks for sitting down with me today; this is a short HR check-in.",
         "That covers everything I needed. Thanks for your time.",
         "Could you tell me about"},
        {"Hi all, I could really use some advice about what I've been feeling lately.",
         "Any guidance would be greatly appreciated.",
         "Regarding"},
        {"Please find below a summary of the applicant's profile.",
         "Thank you for considering this application.",
         "On the matter of"},
    };
    int style = dataset == "violence" ? 0 : dataset == "disease" ? 1 : 2;
    const auto& txt = kText[style];

    std::vector<std::string> names;
    for (const auto& c : graph.concepts()) names.push_back(c.name);

    std::vector<GroundingAsset> pool;
    for (std::size_t i = 0; i < count; ++i) {
        // rotate the question order per template variant
        std::vector<std::string> order = names;
        std::rotate(order.begin(), order.begin() + static_cast<long>(i % order.size()),
                    order.end());
        std::ostringstream body;
        body << txt.opening << " (variant " << i + 1 << ")\n";
        body << "<<persona>>\n";
        for (const auto& n : order)
            body << txt.slot_intro << " " << n << ": <<" << n << ">>\n";
        body << txt.closing << "\n";
        pool.push_back({"template-" + two_digits(i), GroundingAsset::Kind::template_text,
                        body.str(), dataset});
    }
    return pool;
}

std::map<std::string, std::string> default_prompts(const std::string& dataset) {
    std::map<std::string, std::string> p;
    if (dataset == "violence") {
        p["doc_label"] = "HR interview dialogue";
        p["generate_system"] =
            "As a specialist in refining dialogues between HR personnel and a nurse, your task "
            "is to enhance the conversation with added depth, personal insights, and "
            "storytelling. The primary goal is to remain fully consistent with the nurse's "
            "personal information provided. You will also be given fun facts about the nurse's "
            "persona. Use these to enrich the dialogue, but adjust the facts as needed to "
            "ensure they align with the personal information.";
        p["generate_user"] =
            "Based on the provided base dialogue, revise the conversation to incorporate more "
            "depth and include all adjusted fun facts from the nurse's persona. Ensure these "
            "fun facts align with the nurse's personal information.\n"
            "Nurse's personal information: {values}\n"
            "Nurse's Persona: {persona}\n"
            "Base dialogue: {template}\n"
            "Final dialogue:";
    } else if (dataset == "disease") {
        p["doc_label"] = "consultation post";
        p["generate_system"] =
            "You are an AI assistant tasked with crafting a detailed consultation post for a "
            "patient seeking online medical advice. The consultation should be developed by "
            "integrating the patient's provided symptoms, tailored persona details, and the "
            "structural guidance provided by the narrative template.";
        p["generate_user"] =
            "Compose an engaging and detailed consultation post using the following elements:\n"
            "Narrative Template: {template}\n"
            "Patient's Symptoms List: {values}\n"
            "Persona Details: {persona}\n"
            "Please ensure that the final output is a cohesive and engaging narrative without "
            "distinct section breaks.";
    } else {
        p["doc_label"] = "CV statement";
        p["generate_system"] =
            "You are an AI assistant tasked with crafting a CV Personal Statement for a "
            "specific candidate's job application. This statement should be developed by "
            "integrating the candidate's actual personal information, tailored persona details, "
            "and the structural guidance provided by the narrative template.";
        p["generate_user"] =
            "Create an engaging CV Personal Statement for a job application using the "
            "following elements:\n"
            "Narrative Template: {template}\n"
            "Candidate's Personal Information: {values}\n"
            "Persona Details: {persona}\n"
            "Please ensure the final output is a fully-prepared Personal Statement that is "
            "fluent and engaging.";
    }
    return p;
}

std::vector<GroundingAsset> load_asset_dir(const fs::path& dir, GroundingAsset::Kind kind,
                                           const std::string& dataset) {
    std::vector<GroundingAsset> pool;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        std::ifstream in(f);
        std::ostringstream body;
        body << in.rdbuf();
        if (body.str().empty())
            throw MalformedAssetFile("empty asset file: " + f.string());
        pool.push_back({f.stem().string(), kind, body.str(), dataset});
    }
    return pool;
}

}  // namespace

const std::string& builtin_graph_json(const std::string& name) {
    if (name == "violence") return kViolenceGraph;
    if (name == "disease") return kDiseaseGraph;
    if (name == "cv") return kCvGraph;
    throw UnknownDataset("unknown dataset: " + name);
}

std::vector<std::string> builtin_dataset_names() { return {"violence", "disease", "cv"}; }

DgpBundle load_builtin(const std::string& name, const std::string& asset_dir) {
    DgpBundle b;
    b.name = name;
    b.graph = validate_graph_from_string(builtin_graph_json(name));
    for (const auto& c : b.graph.concepts())
        for (const auto& v : c.values) b.verbalizer[{c.name, v.code}] = v.label;

    fs::path root = asset_dir.empty() ? fs::path{} : fs::path(asset_dir) / name;
    auto load_or = [&](const char* sub, GroundingAsset::Kind kind,
                       std::vector<GroundingAsset> fallback) {
        if (!root.empty() && fs::is_directory(root / sub)) {
            auto pool = load_asset_dir(root / sub, kind, name);
            if (!pool.empty()) return pool;
        }
        return fallback;
    };
    b.persona_pool = load_or("personas", GroundingAsset::Kind::persona, synth_personas(name, 24));
    b.template_pool = load_or("templates", GroundingAsset::Kind::template_text,
                              synth_templates(b.graph, name, 24));
    b.prompt_set = default_prompts(name);
    if (!root.empty() && fs::is_directory(root / "prompts")) {
        for (const auto& a :
             load_asset_dir(root / "prompts", GroundingAsset::Kind::template_text, name))
            b.prompt_set[a.id] = a.body;
    }
    if (!root.empty() && fs::is_regular_file(root / "graph.json")) {
        std::ifstream in(root / "graph.json");
        std::ostringstream text;
        text << in.rdbuf();
        try {
            b.graph = validate_graph_from_string(text.str());
        } catch (const nlohmann::json::exception& e) {
            throw MalformedAssetFile("bad graph.json for " + name + ": " + e.what());
        }
    }
    return b;
}

const std::string& DgpBundle::verbalize(const std::string& concept_name, int code) const {
    auto it = verbalizer.find({concept_name, code});
    if (it == verbalizer.end())
        throw CodeOutOfRange("no verbalization for " + concept_name + "=" + std::to_string(code));
    return it->second;
}

const GroundingAsset& DgpBundle::persona(const std::string& id) const {
    for (const auto& a : persona_pool)
        if (a.id == id) return a;
    throw MalformedAssetFile("unknown persona id: " + id);
}

const GroundingAsset& DgpBundle::template_asset(const std::string& id) const {
    for (const auto& a : template_pool)
        if (a.id == id) return a;
    throw MalformedAssetFile("unknown template id: " + id);
}

std::vector<std::string> DgpBundle::persona_ids() const {
    std::vector<std::string> ids;
    for (const auto& a : persona_pool) ids.push_back(a.id);
    return ids;
}

std::vector<std::string> DgpBundle::template_ids() const {
    std::vector<std::string> ids;
    for (const auto& a : template_pool) ids.push_back(a.id);
    return ids;
}

std::pair<GroundingAsset, GroundingAsset> sample_grounding(const DgpBundle& bundle, Rng& rng) {
    if (bundle.persona_pool.empty() || bundle.template_pool.empty())
        throw EmptyPool("asset pool is empty for dataset " + bundle.name);
    const auto& p = bundle.persona_pool[rng.next_below(bundle.persona_pool.size())];
    const auto& t = bundle.template_pool[rng.next_below(bundle.template_pool.size())];
    return {p, t};
}

}  // namespace liberty
