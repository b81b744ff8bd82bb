#include <doctest.h>

#include <cmath>
#include <map>

#include "liberty/dgp.hpp"
#include "liberty/errors.hpp"
#include "liberty/rng.hpp"

using namespace liberty;

TEST_CASE("builtin bundles load with the expected shapes") {
    auto violence = load_builtin("violence");
    CHECK(violence.graph.concepts().size() == 8);
    CHECK(violence.graph.outcome() == "Violence");
    CHECK(violence.persona_pool.size() >= 20);
    CHECK(violence.template_pool.size() >= 20);

    auto cv = load_builtin("cv");
    const auto& q = cv.graph.equation("Quality");
    CHECK(q.terms.size() == 4);
    for (const auto& t : q.terms) CHECK(t.weight == 0.3);
    CHECK(q.noise_mean == 0.0);
    CHECK(q.noise_std == 0.3);

    CHECK_THROWS_AS(load_builtin("restaurant"), UnknownDataset);
}

TEST_CASE("verbalizer is total and consistent with concept values") {
    for (const auto& name : builtin_dataset_names()) {
        auto bundle = load_builtin(name);
        for (const auto& c : bundle.graph.concepts())
            for (int code = 0; code < c.num_codes(); ++code) {
                const auto& label = bundle.verbalize(c.name, code);
                CHECK(!label.empty());
                CHECK(label == c.values[std::size_t(code)].label);
            }
        CHECK_THROWS_AS(bundle.verbalize("Gender", 99), CodeOutOfRange);
    }
}

TEST_CASE("sample_grounding draws uniformly and replays") {
    auto bundle = load_builtin("disease");
    {
        Rng a(5), b(5);
        auto [pa, ta] = sample_grounding(bundle, a);
        auto [pb, tb] = sample_grounding(bundle, b);
        CHECK(pa.id == pb.id);
        CHECK(ta.id == tb.id);
    }

    // persona frequencies within 3 sigma of uniform
    const int n = 10000;
    std::map<std::string, int> counts;
    Rng rng(99);
    for (int i = 0; i < n; ++i) counts[sample_grounding(bundle, rng).first.id]++;
    double p = 1.0 / double(bundle.persona_pool.size());
    double sigma = std::sqrt(n * p * (1 - p));
    for (const auto& asset : bundle.persona_pool)
        CHECK(std::abs(counts[asset.id] - n * p) < 3 * sigma + 1);
}

TEST_CASE("grounding assets are well-formed") {
    for (const auto& name : builtin_dataset_names()) {
        auto bundle = load_builtin(name);
        std::map<std::string, int> ids;
        for (const auto& a : bundle.persona_pool) {
            CHECK(!a.body.empty());
            CHECK(++ids[a.id] == 1);  // unique within the pool
        }
        ids.clear();
        for (const auto& t : bundle.template_pool) {
            CHECK(!t.body.empty());
            CHECK(++ids[t.id] == 1);
        }
        CHECK(bundle.prompt_set.count("doc_label") == 1);
    }
}

TEST_CASE("empty pools are rejected at draw time") {
    auto bundle = load_builtin("cv");
    bundle.persona_pool.clear();
    Rng rng(1);
    CHECK_THROWS_AS(sample_grounding(bundle, rng), EmptyPool);
}
