#include "liberty/render.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "liberty/sha256.hpp"

namespace liberty {

namespace fs = std::filesystem;
using nlohmann::json;

std::string render_cache_key(const DgpBundle& bundle, const ConceptAssignment& assignment,
                             const std::string& persona_id, const std::string& template_id,
                             const std::string& renderer_id) {
    std::ostringstream key;
    key << bundle.name << '\n' << renderer_id << '\n' << bundle.prompt_version << '\n'
        << persona_id << '\n' << template_id << '\n';
    for (const auto& [c, v] : assignment.values) key << c << '=' << v << ';';
    return sha256_hex(key.str());
}

namespace {

std::string replace_once(std::string text, const std::string& slot, const std::string& value,
                         const std::string& context) {
    auto pos = text.find(slot);
    if (pos == std::string::npos)
        throw MissingSlot("template lacks slot " + slot + " (" + context + ")");
    text.replace(pos, slot.size(), value);
    if (text.find(slot) != std::string::npos)
        throw MissingSlot("slot " + slot + " appears more than once (" + context + ")");
    return text;
}

}  // namespace

RenderedText render_deterministic(const DgpBundle& bundle, const ConceptAssignment& assignment,
                                  const GroundingAsset& persona, const GroundingAsset& tmpl) {
    std::string text = tmpl.body;
    for (const auto& c : bundle.graph.concepts()) {
        auto it = assignment.values.find(c.name);
        if (it == assignment.values.end())
            throw MissingSlot("assignment lacks a value for concept " + c.name);
        std::string marker = "[" + c.name + ": " + bundle.verbalize(c.name, it->second) + "]";
        text = replace_once(std::move(text), "<<" + c.name + ">>", marker, tmpl.id);
    }
    auto pos = text.find("<<persona>>");
    if (pos != std::string::npos) text.replace(pos, 11, persona.body);

    RenderedText out;
    out.text = std::move(text);
    out.renderer_id = kDeterministicRendererId;
    out.prompt_hash = render_cache_key(bundle, assignment, persona.id, tmpl.id,
                                       kDeterministicRendererId);
    return out;
}

std::map<std::string, int> recover_markers(const DgpBundle& bundle, const std::string& text) {
    std::map<std::string, int> out;
    // reverse verbalizer per concept
    std::map<std::string, std::map<std::string, int>> reverse;
    for (const auto& [key, label] : bundle.verbalizer) reverse[key.first][label] = key.second;

    std::size_t pos = 0;
    while ((pos = text.find('[', pos)) != std::string::npos) {
        auto close = text.find(']', pos);
        auto sep = text.find(": ", pos);
        if (close == std::string::npos || sep == std::string::npos || sep > close) {
            ++pos;
            continue;
        }
        std::string name = text.substr(pos + 1, sep - pos - 1);
        std::string label = text.substr(sep + 2, close - sep - 2);
        auto cit = reverse.find(name);
        if (cit != reverse.end()) {
            auto vit = cit->second.find(label);
            if (vit != cit->second.end()) out[name] = vit->second;
        }
        pos = close + 1;
    }
    return out;
}

ConceptAssignment recover_assignment(const DgpBundle& bundle, const std::string& text) {
    auto markers = recover_markers(bundle, text);
    ConceptAssignment a;
    for (const auto& c : bundle.graph.concepts()) {
        auto it = markers.find(c.name);
        if (it == markers.end())
            throw MalformedResponse("text carries no marker for concept " + c.name);
        a.values[c.name] = it->second;
    }
    return a;
}

std::string build_generation_prompt(const DgpBundle& bundle, const ConceptAssignment& assignment,
                                    const GroundingAsset& persona, const GroundingAsset& tmpl) {
    std::ostringstream values;
    bool first = true;
    for (const auto& c : bundle.graph.concepts()) {
        if (!first) values << ", ";
        first = false;
        values << c.name << ": " << bundle.verbalize(c.name, assignment.values.at(c.name));
    }
    std::string prompt = bundle.prompt_set.at("generate_user");
    auto sub = [&](const std::string& slot, const std::string& value) {
        auto pos = prompt.find(slot);
        if (pos != std::string::npos) prompt.replace(pos, slot.size(), value);
    };
    sub("{values}", values.str());
    sub("{persona}", persona.body);
    sub("{template}", tmpl.body);
    return prompt;
}

std::optional<std::string> RenderCache::get(const std::string& dataset,
                                            const std::string& hash) const {
    fs::path p = fs::path(dir_) / dataset / (hash + ".txt");
    std::lock_guard lock(mu_);
    if (!fs::is_regular_file(p)) return std::nullopt;
    std::ifstream in(p, std::ios::binary);
    std::ostringstream body;
    body << in.rdbuf();
    return body.str();
}

void RenderCache::put(const std::string& dataset, const std::string& hash,
                      const std::string& text, const std::string& renderer_id,
                      const std::string& prompt_version) {
    std::lock_guard lock(mu_);
    fs::path dir = fs::path(dir_) / dataset;
    fs::create_directories(dir);
    {
        std::ofstream out(dir / (hash + ".txt"), std::ios::binary);
        out << text;
    }
    fs::path manifest = dir / "manifest.json";
    json m;
    if (fs::is_regular_file(manifest)) {
        std::ifstream in(manifest);
        in >> m;
    }
    m["renderer_id"] = renderer_id;
    m["prompt_version"] = prompt_version;
    std::ofstream out(manifest);
    out << m.dump(2) << '\n';
}

std::string RenderCache::get_or_compute(const std::string& dataset, const std::string& hash,
                                        const std::string& renderer_id,
                                        const std::string& prompt_version,
                                        const std::function<std::string()>& compute) {
    {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return !inflight_.count(hash); });
        fs::path p = fs::path(dir_) / dataset / (hash + ".txt");
        if (fs::is_regular_file(p)) {
            std::ifstream in(p, std::ios::binary);
            std::ostringstream body;
            body << in.rdbuf();
            return body.str();
        }
        inflight_.insert(hash);
    }
    std::string text;
    try {
        text = compute();
    } catch (...) {
        std::lock_guard lock(mu_);
        inflight_.erase(hash);
        cv_.notify_all();
        throw;
    }
    put(dataset, hash, text, renderer_id, prompt_version);
    {
        std::lock_guard lock(mu_);
        inflight_.erase(hash);
    }
    cv_.notify_all();
    return text;
}

std::string chat_completion(const LlmEndpoint& endpoint, const std::string& system_prompt,
                            const std::string& user_prompt, double temperature) {
    if (temperature != 0.0)
        throw NonZeroTemperature("chat completion requires temperature 0");
    json body = {{"model", endpoint.model},
                 {"temperature", 0.0},
                 {"messages", json::array({{{"role", "system"}, {"content", system_prompt}},
                                           {{"role", "user"}, {"content", user_prompt}}})}};

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
        auto res = client.Post("/v1/chat/completions", headers, body.dump(), "application/json");
        if (!res) {
            last_error = "connection failed";
            continue;
        }
        if (res->status >= 500 || res->status == 429) {
            last_error = "status " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200)
            throw EndpointUnreachable("chat completion failed with status " +
                                      std::to_string(res->status));
        try {
            json reply = json::parse(res->body);
            std::string text = reply.at("choices").at(0).at("message").at("content")
                                   .get<std::string>();
            if (text.empty()) throw EmptyCompletion("endpoint returned an empty completion");
            return text;
        } catch (const json::exception& e) {
            throw EndpointUnreachable(std::string("malformed completion response: ") + e.what());
        }
    }
    throw EndpointUnreachable("chat completion failed after retries: " + last_error);
}

RenderedText render_llm(const LlmEndpoint& endpoint, const DgpBundle& bundle,
                        const ConceptAssignment& assignment, const GroundingAsset& persona,
                        const GroundingAsset& tmpl, RenderCache& cache, double temperature) {
    if (temperature != 0.0)
        throw NonZeroTemperature("llm renderer requires temperature 0");
    std::string renderer_id = "llm/" + endpoint.model;
    std::string hash = render_cache_key(bundle, assignment, persona.id, tmpl.id, renderer_id);

    RenderedText out;
    out.renderer_id = renderer_id;
    out.prompt_hash = hash;
    if (auto cached = cache.get(bundle.name, hash)) {
        out.text = *cached;
        out.cache_hit = true;
        return out;
    }
    std::string prompt = build_generation_prompt(bundle, assignment, persona, tmpl);
    out.text = cache.get_or_compute(bundle.name, hash, renderer_id, bundle.prompt_version, [&] {
        return chat_completion(endpoint, bundle.prompt_set.at("generate_system"), prompt, 0.0);
    });
    return out;
}

}  // namespace liberty
