#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <set>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "liberty/dgp.hpp"
#include "liberty/errors.hpp"
#include "liberty/render.hpp"

using namespace liberty;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    auto p = fs::temp_directory_path() / ("liberty-test-" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("deterministic rendering is byte-stable and verbalizes every concept") {
    auto bundle = load_builtin("violence");
    auto exo = test_helpers::with_grounding(bundle, test_helpers::violence_exo(bundle.graph));
    auto a = evaluate(bundle.graph, exo);
    const auto& persona = bundle.persona(exo.persona_id);
    const auto& tmpl = bundle.template_asset(exo.template_id);

    auto r1 = render_deterministic(bundle, a, persona, tmpl);
    auto r2 = render_deterministic(bundle, a, persona, tmpl);
    CHECK(r1.text == r2.text);
    CHECK(r1.renderer_id == kDeterministicRendererId);
    CHECK(r1.text.find("Male") != std::string::npos);
    CHECK(r1.text.find("White") != std::string::npos);
    CHECK(r1.text.find(persona.body) != std::string::npos);
}

TEST_CASE("markers recover the exact assignment for every sampled example") {
    for (const auto& name : builtin_dataset_names()) {
        auto bundle = load_builtin(name);
        for (std::uint64_t seed = 0; seed < 300; ++seed) {
            auto exo = sample_exogenous(bundle.graph, seed, bundle.persona_ids(),
                                        bundle.template_ids());
            auto a = evaluate(bundle.graph, exo);
            auto r = render_deterministic(bundle, a, bundle.persona(exo.persona_id),
                                          bundle.template_asset(exo.template_id));
            auto back = recover_assignment(bundle, r.text);
            CHECK(back.values == a.values);
        }
    }
}

TEST_CASE("factual and counterfactual texts differ exactly on changed concepts") {
    auto bundle = load_builtin("violence");
    auto exo = test_helpers::with_grounding(bundle, test_helpers::violence_exo(bundle.graph));
    auto factual = evaluate(bundle.graph, exo);
    auto cf = counterfactual_assignment(bundle.graph, exo, {"Gender", 1, 0});

    const auto& persona = bundle.persona(exo.persona_id);
    const auto& tmpl = bundle.template_asset(exo.template_id);
    auto ft = render_deterministic(bundle, factual, persona, tmpl);
    auto ct = render_deterministic(bundle, cf, persona, tmpl);

    auto fm = recover_markers(bundle, ft.text);
    auto cm = recover_markers(bundle, ct.text);
    std::set<std::string> diff;
    for (const auto& [name, code] : fm)
        if (cm.at(name) != code) diff.insert(name);
    CHECK(diff == std::set<std::string>{"Gender", "Department", "Violence"});
}

TEST_CASE("templates missing a slot are rejected") {
    auto bundle = load_builtin("cv");
    auto exo = sample_exogenous(bundle.graph, 3, bundle.persona_ids(), bundle.template_ids());
    auto a = evaluate(bundle.graph, exo);
    GroundingAsset broken{"broken", GroundingAsset::Kind::template_text, "no slots here", "cv"};
    CHECK_THROWS_AS(
        render_deterministic(bundle, a, bundle.persona_pool.front(), broken), MissingSlot);
}

TEST_CASE("cache keys separate assignments, grounding, and renderer") {
    auto bundle = load_builtin("disease");
    auto exo = sample_exogenous(bundle.graph, 5, bundle.persona_ids(), bundle.template_ids());
    auto a = evaluate(bundle.graph, exo);
    auto b = evaluate(bundle.graph, exo, {{"Fever", 2}});

    auto base = render_cache_key(bundle, a, "p", "t", "r");
    CHECK(base == render_cache_key(bundle, a, "p", "t", "r"));
    CHECK(base != render_cache_key(bundle, b, "p", "t", "r"));
    CHECK(base != render_cache_key(bundle, a, "p2", "t", "r"));
    CHECK(base != render_cache_key(bundle, a, "p", "t2", "r"));
    CHECK(base != render_cache_key(bundle, a, "p", "t", "r2"));

    // no collisions across many random assignments
    std::set<std::string> keys;
    for (std::uint64_t seed = 0; seed < 2000; ++seed) {
        auto e = sample_exogenous(bundle.graph, seed, {}, {});
        keys.insert(render_cache_key(bundle, evaluate(bundle.graph, e), "p", "t", "r"));
    }
    CHECK(keys.size() > 100);  // distinct assignments appeared
}

TEST_CASE("render cache stores, replays, and deduplicates in-flight work") {
    auto dir = temp_dir("cache");
    RenderCache cache(dir.string());
    CHECK(!cache.get("d", "k1"));
    cache.put("d", "k1", "hello", "r", "v1");
    CHECK(cache.get("d", "k1") == std::string("hello"));

    std::atomic<int> computed{0};
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i)
        threads.emplace_back([&] {
            cache.get_or_compute("d", "k2", "r", "v1", [&] {
                ++computed;
                std::this_thread::sleep_for(std::chrono::milliseconds(20));
                return std::string("computed");
            });
        });
    for (auto& t : threads) t.join();
    CHECK(computed.load() == 1);
    CHECK(cache.get("d", "k2") == std::string("computed"));
    fs::remove_all(dir);
}

TEST_CASE("llm rendering talks to a chat-completions endpoint and caches") {
    auto bundle = load_builtin("cv");
    auto exo = sample_exogenous(bundle.graph, 1, bundle.persona_ids(), bundle.template_ids());
    auto a = evaluate(bundle.graph, exo);
    const auto& persona = bundle.persona(exo.persona_id);
    const auto& tmpl = bundle.template_asset(exo.template_id);

    std::atomic<int> hits{0};
    httplib::Server server;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        json body = json::parse(req.body);
        CHECK(body.at("temperature").get<double>() == 0.0);
        json reply = {{"choices",
                       json::array({{{"message",
                                      {{"role", "assistant"},
                                       {"content", "a generated cv statement"}}}}})}};
        res.set_content(reply.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    auto dir = temp_dir("llm-cache");
    RenderCache cache(dir.string());
    LlmEndpoint endpoint{"http://127.0.0.1:" + std::to_string(port), "test-model"};

    auto r1 = render_llm(endpoint, bundle, a, persona, tmpl, cache);
    CHECK(r1.text == "a generated cv statement");
    CHECK(!r1.cache_hit);
    auto r2 = render_llm(endpoint, bundle, a, persona, tmpl, cache);
    CHECK(r2.cache_hit);
    CHECK(r2.text == r1.text);
    CHECK(hits.load() == 1);

    SUBCASE("nonzero temperature is refused before any request") {
        CHECK_THROWS_AS(render_llm(endpoint, bundle, a, persona, tmpl, cache, 0.7),
                        NonZeroTemperature);
    }

    server.stop();
    server_thread.join();
    fs::remove_all(dir);
}

TEST_CASE("transient failures are retried, hard failures surface") {
    std::atomic<int> calls{0};
    httplib::Server server;
    server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        if (++calls == 1) {
            res.status = 503;
            return;
        }
        json reply = {{"choices",
                       json::array({{{"message", {{"content", "recovered"}}}}})}};
        res.set_content(reply.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    LlmEndpoint endpoint{"http://127.0.0.1:" + std::to_string(port), "m"};
    endpoint.initial_backoff_ms = 10;
    CHECK(chat_completion(endpoint, "s", "u", 0.0) == "recovered");
    CHECK(calls.load() == 2);

    server.stop();
    server_thread.join();

    SUBCASE("unreachable endpoint fails after bounded retries") {
        LlmEndpoint dead{"http://127.0.0.1:1", "m"};
        dead.max_retries = 1;
        dead.initial_backoff_ms = 5;
        CHECK_THROWS_AS(chat_completion(dead, "s", "u", 0.0), EndpointUnreachable);
    }
}

TEST_CASE("empty completion raises EmptyCompletion") {
    httplib::Server server;
    server.Post("/v1/chat/completions", [](const httplib::Request&, httplib::Response& res) {
        json reply = {{"choices", json::array({{{"message", {{"content", ""}}}}})}};
        res.set_content(reply.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    LlmEndpoint endpoint{"http://127.0.0.1:" + std::to_string(port), "m"};
    CHECK_THROWS_AS(chat_completion(endpoint, "s", "u", 0.0), EmptyCompletion);
    server.stop();
    server_thread.join();
}
