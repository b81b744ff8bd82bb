#pragma once

#include <map>
#include <string>

#include "liberty/dgp.hpp"
#include "liberty/scm.hpp"

namespace test_helpers {

// Exogenous record with chosen root draws and zero noise on every equation,
// so evaluations are hand-checkable.
inline liberty::ExogenousRecord zero_noise_exo(const liberty::ScmGraph& graph,
                                               const std::map<std::string, double>& root_draws) {
    liberty::ExogenousRecord exo;
    for (const auto& c : graph.concepts()) {
        auto it = root_draws.find(c.name);
        exo.noise[c.name] = it != root_draws.end() ? it->second : 0.0;
    }
    return exo;
}

inline liberty::ExogenousRecord with_grounding(const liberty::DgpBundle& bundle,
                                               liberty::ExogenousRecord exo) {
    exo.persona_id = bundle.persona_pool.front().id;
    exo.template_id = bundle.template_pool.front().id;
    return exo;
}

// Violence world G=1, A=1, R=2 with zero equation noise:
// T=1, L=1, D=2, S=1, Y=1.
inline liberty::ExogenousRecord violence_exo(const liberty::ScmGraph& graph) {
    return zero_noise_exo(graph, {{"Gender", 0.6}, {"Age", 0.5}, {"Race", 0.6}});
}

}  // namespace test_helpers
