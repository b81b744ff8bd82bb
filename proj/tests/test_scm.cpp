#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "liberty/dgp.hpp"
#include "liberty/errors.hpp"
#include "liberty/scm.hpp"

using namespace liberty;
using test_helpers::violence_exo;
using test_helpers::zero_noise_exo;
using nlohmann::json;

TEST_CASE("violence graph validates with the expected shape") {
    auto g = validate_graph_from_string(builtin_graph_json("violence"));
    CHECK(g.concepts().size() == 8);
    CHECK(g.outcome() == "Violence");
    CHECK(g.concept_spec("Violence").num_codes() == 3);
    CHECK(g.concept_spec("Seniority").num_codes() == 4);
    CHECK(g.concept_spec("Department").num_codes() == 4);
    // roots first, outcome last
    const auto& order = g.topological_order();
    std::set<std::string> first3(order.begin(), order.begin() + 3);
    CHECK(first3 == std::set<std::string>{"Gender", "Age", "Race"});
    CHECK(order.back() == "Violence");
}

TEST_CASE("validation rejects bad graphs") {
    json spec = json::parse(builtin_graph_json("violence"));

    SUBCASE("a 2-cycle is detected") {
        spec["edges"].push_back({"License", "Gender"});
        spec["equations"].push_back(
            {{"target", "Gender"},
             {"terms", {{{"parent", "License"}, {"weight", 1.0}}}},
             {"intercept", 0.0},
             {"noise", {{"mean", 0.0}, {"std", 0.0}}},
             {"clamp", {0, 1}}});
        spec["priors"].erase(0);  // Gender prior
        CHECK_THROWS_AS(validate_graph(spec), CycleDetected);
    }
    SUBCASE("equation weight on a non-parent is rejected") {
        // Seniority has no Department edge
        spec["equations"][3]["terms"].push_back({{"parent", "Department"}, {"weight", 0.1}});
        CHECK_THROWS_AS(validate_graph(spec), EquationParentMismatch);
    }
    SUBCASE("an equation must cover every declared parent") {
        spec["equations"][0]["terms"] = json::array();  // Tenure drops its Age term
        CHECK_THROWS_AS(validate_graph(spec), EquationParentMismatch);
    }
    SUBCASE("two outcomes are rejected") {
        spec["concepts"][6]["role"] = "outcome";  // Seniority
        CHECK_THROWS_AS(validate_graph(spec), MultipleOutcomes);
    }
    SUBCASE("dangling edge endpoint is rejected") {
        spec["edges"].push_back({"Gender", "Salary"});
        CHECK_THROWS_AS(validate_graph(spec), UnknownParent);
    }
}

TEST_CASE("sample_exogenous is deterministic and respects noise parameters") {
    auto g = validate_graph_from_string(builtin_graph_json("violence"));
    auto a = sample_exogenous(g, 42, {"p1", "p2"}, {"t1", "t2"});
    auto b = sample_exogenous(g, 42, {"p1", "p2"}, {"t1", "t2"});
    CHECK(a == b);
    CHECK(sample_exogenous(g, 43, {"p1"}, {"t1"}).noise != a.noise);

    // empirical mean of Tenure's noise over many seeds approaches 0.05
    double sum = 0.0;
    const int n = 100000;
    for (int s = 0; s < n; ++s)
        sum += sample_exogenous(g, std::uint64_t(s), {}, {}).noise.at("Tenure");
    CHECK(std::abs(sum / n - 0.05) < 0.01);
}

TEST_CASE("zero-std noise collapses to the mean") {
    json spec = json::parse(builtin_graph_json("violence"));
    for (auto& eq : spec["equations"]) eq["noise"]["std"] = 0.0;
    auto g = validate_graph(spec);
    auto exo = sample_exogenous(g, 7, {}, {});
    CHECK(exo.noise.at("Tenure") == 0.05);
    CHECK(exo.noise.at("Violence") == 0.3);
}

TEST_CASE("violence world evaluates per the structural equations") {
    auto g = validate_graph_from_string(builtin_graph_json("violence"));
    auto exo = violence_exo(g);
    auto a = evaluate(g, exo);
    CHECK(a.values.at("Gender") == 1);
    CHECK(a.values.at("Age") == 1);
    CHECK(a.values.at("Race") == 2);
    CHECK(a.values.at("Tenure") == 1);
    CHECK(a.values.at("License") == 1);
    CHECK(a.values.at("Department") == 2);
    CHECK(a.values.at("Seniority") == 1);
    CHECK(a.values.at("Violence") == 1);
    CHECK(a.interventions.empty());

    SUBCASE("do(Gender=0) shifts Department and Violence") {
        auto b = evaluate(g, exo, {{"Gender", 0}});
        CHECK(b.values.at("Gender") == 0);
        CHECK(b.values.at("License") == 1);
        CHECK(b.values.at("Department") == 1);
        CHECK(b.values.at("Seniority") == 1);
        CHECK(b.values.at("Violence") == 0);
        CHECK(b.interventions == std::set<std::string>{"Gender"});
    }
    SUBCASE("intervention validation") {
        CHECK_THROWS_AS(evaluate(g, exo, {{"Salary", 1}}), UnknownConcept);
        CHECK_THROWS_AS(evaluate(g, exo, {{"Gender", 5}}), CodeOutOfRange);
    }
}

TEST_CASE("disease world with Migraine root") {
    auto g = validate_graph_from_string(builtin_graph_json("disease"));
    auto exo = zero_noise_exo(g, {{"Disease", 0.1}});  // Y = 0
    auto a = evaluate(g, exo);
    CHECK(a.values.at("Disease") == 0);
    CHECK(a.values.at("Dizziness") == 1);
    CHECK(a.values.at("LightSensitivity") == 1);
    CHECK(a.values.at("NasalCongestion") == 0);
    CHECK(a.values.at("FacialPain") == 0);
    CHECK(a.values.at("Fever") == 0);
    CHECK(a.values.at("Weakness") == 0);
    CHECK(a.values.at("Headache") == 1);
}

TEST_CASE("counterfactuals touch only the target and its descendants") {
    auto g = validate_graph_from_string(builtin_graph_json("violence"));
    auto exo = violence_exo(g);
    auto factual = evaluate(g, exo);

    SUBCASE("Gender 1->0 flips exactly {Gender, Department, Violence}") {
        auto cf = counterfactual_assignment(g, exo, {"Gender", 1, 0});
        std::set<std::string> diff;
        for (const auto& [name, code] : factual.values)
            if (cf.values.at(name) != code) diff.insert(name);
        CHECK(diff == std::set<std::string>{"Gender", "Department", "Violence"});
    }
    SUBCASE("factual mismatch is rejected") {
        CHECK_THROWS_AS(counterfactual_assignment(g, exo, {"Gender", 0, 1}), FactualMismatch);
    }
}

TEST_CASE("disease counterfactual: nasal congestion raises headache") {
    auto g = validate_graph_from_string(builtin_graph_json("disease"));
    auto exo = zero_noise_exo(g, {{"Disease", 0.1}});
    auto factual = evaluate(g, exo);
    REQUIRE(factual.values.at("NasalCongestion") == 0);
    REQUIRE(factual.values.at("Headache") == 1);

    auto cf = counterfactual_assignment(g, exo, {"NasalCongestion", 0, 2});
    CHECK(cf.values.at("Headache") == 2);
    for (const auto& [name, code] : factual.values)
        if (name != "NasalCongestion" && name != "Headache")
            CHECK(cf.values.at(name) == code);

    SUBCASE("a leaf symptom change touches nothing else") {
        auto leaf = counterfactual_assignment(g, exo, {"Fever", 0, 2});
        for (const auto& [name, code] : factual.values)
            if (name != "Fever") CHECK(leaf.values.at(name) == code);
    }
}

TEST_CASE("enumerate_changes counts and outcome policy") {
    auto violence = validate_graph_from_string(builtin_graph_json("violence"));
    auto disease = validate_graph_from_string(builtin_graph_json("disease"));

    CHECK(enumerate_changes(violence, std::optional<std::string>("Gender")).size() == 2);
    CHECK(enumerate_changes(violence, std::optional<std::string>("Race")).size() == 12);
    // 2 + 6 + 12 + 6 + 6 + 12 + 12, outcome excluded
    CHECK(enumerate_changes(violence).size() == 56);
    // disease opts the outcome in: 8 concepts x 6 ordered pairs
    CHECK(enumerate_changes(disease).size() == 48);
    CHECK_THROWS_AS(enumerate_changes(violence, std::optional<std::string>("Salary")),
                    UnknownConcept);
}

TEST_CASE("ancestors and descendants") {
    auto g = validate_graph_from_string(builtin_graph_json("violence"));
    CHECK(ancestors(g, "Seniority") ==
          std::set<std::string>{"Age", "Gender", "Race", "Tenure", "License"});
    CHECK(descendants(g, "Gender") ==
          std::set<std::string>{"License", "Department", "Seniority", "Violence"});
    CHECK(ancestors(g, "Race").empty());
}

TEST_CASE("replay determinism and null-intervention identity") {
    for (const auto& name : builtin_dataset_names()) {
        auto g = validate_graph_from_string(builtin_graph_json(name));
        for (std::uint64_t seed = 0; seed < 200; ++seed) {
            auto exo = sample_exogenous(g, seed, {}, {});
            auto a = evaluate(g, exo);
            CHECK(evaluate(g, exo).values == a.values);
            // forcing a concept to its factual value changes nothing
            const auto& c = g.concepts()[seed % g.concepts().size()].name;
            CHECK(evaluate(g, exo, {{c, a.values.at(c)}}).values == a.values);
        }
    }
}

TEST_CASE("all evaluations respect clamps") {
    for (const auto& name : builtin_dataset_names()) {
        auto g = validate_graph_from_string(builtin_graph_json(name));
        for (std::uint64_t seed = 0; seed < 5000; ++seed) {
            auto a = evaluate(g, sample_exogenous(g, seed, {}, {}));
            for (const auto& c : g.concepts()) {
                CHECK(a.values.at(c.name) >= 0);
                CHECK(a.values.at(c.name) < c.num_codes());
            }
        }
    }
}

TEST_CASE("three-concept chain matches a brute-force truth table") {
    // A(0..2) -> B = round(0.6 A), B -> C = round(0.5 A + 0.5 B)  (zero noise)
    json spec = {
        {"name", "chain"},
        {"concepts",
         {{{"name", "A"},
           {"values",
            {{{"code", 0}, {"label", "a0"}}, {{"code", 1}, {"label", "a1"}},
             {{"code", 2}, {"label", "a2"}}}}},
          {{"name", "B"},
           {"values", {{{"code", 0}, {"label", "b0"}}, {{"code", 1}, {"label", "b1"}}}}},
          {{"name", "C"},
           {"role", "outcome"},
           {"values",
            {{{"code", 0}, {"label", "c0"}}, {{"code", 1}, {"label", "c1"}},
             {{"code", 2}, {"label", "c2"}}}}}}},
        {"edges", json::array({json::array({"A", "B"}), json::array({"A", "C"}),
                               json::array({"B", "C"})})},
        {"priors", {{{"concept", "A"}, {"probs", {0.25, 0.5, 0.25}}}}},
        {"equations",
         {{{"target", "B"},
           {"terms", {{{"parent", "A"}, {"weight", 0.6}}}},
           {"intercept", 0.0},
           {"noise", {{"mean", 0.0}, {"std", 0.0}}},
           {"clamp", {0, 1}}},
          {{"target", "C"},
           {"terms", {{{"parent", "A"}, {"weight", 0.5}}, {{"parent", "B"}, {"weight", 0.5}}}},
           {"intercept", 0.0},
           {"noise", {{"mean", 0.0}, {"std", 0.0}}},
           {"clamp", {0, 2}}}}}};
    auto g = validate_graph(spec);
    // truth table: A=0 -> B=0, C=0; A=1 -> B=1, C=1; A=2 -> B=1, C=round(1.5)=2
    const int expect_b[] = {0, 1, 1};
    const int expect_c[] = {0, 1, 2};
    for (int a = 0; a < 3; ++a) {
        auto exo = test_helpers::zero_noise_exo(g, {{"A", 0.0}});
        auto v = evaluate(g, exo, {{"A", a}});
        CHECK(v.values.at("B") == expect_b[a]);
        CHECK(v.values.at("C") == expect_c[a]);
    }
}

TEST_CASE("graph digest is canonical and stable") {
    auto a = validate_graph_from_string(builtin_graph_json("cv"));
    auto b = validate_graph_from_string(builtin_graph_json("cv"));
    CHECK(a.digest() == b.digest());
    CHECK(a.digest().size() == 64);
    CHECK(a.digest() != validate_graph_from_string(builtin_graph_json("violence")).digest());
}

TEST_CASE("exogenous records and assignments round-trip through json") {
    auto g = validate_graph_from_string(builtin_graph_json("disease"));
    auto exo = sample_exogenous(g, 11, {"p"}, {"t"});
    CHECK(exo_from_json(exo_to_json(exo)) == exo);
    auto a = evaluate(g, exo, {{"Fever", 2}});
    auto back = assignment_from_json(assignment_to_json(a));
    CHECK(back == a);
}
