#pragma once

#include "sdlab/optimizer.hpp"
#include "sdlab/prior.hpp"

namespace sdlab::testing {

/// Schedule fixture with hand-picked alpha_bar values (betas filled to match
/// the product structure only loosely; tests that need exact betas build real
/// schedules instead).
inline NoiseSchedule fixed_abar(const Vec& abars) {
    NoiseSchedule s;
    s.total_steps = static_cast<int>(abars.size());
    s.alpha_bars = abars;
    s.betas.resize(abars.size());
    double prev = 1.0;
    for (size_t i = 0; i < abars.size(); ++i) {
        s.betas[i] = 1.0 - abars[i] / prev;
        prev = abars[i];
    }
    return s;
}

/// The standard bimodal config: two text-selected modes at (+-2, 0), variance
/// 0.1, plus a broad background component that only the unconditional prior
/// (and the "near_*" labels) see.
inline GmmPrior bimodal_prior() {
    GmmPrior p;
    p.dim = 2;
    p.components.push_back({0.4, {2.0, 0.0}, 0.1});
    p.components.push_back({0.4, {-2.0, 0.0}, 0.1});
    p.components.push_back({0.2, {0.0, 0.0}, 4.0});
    p.text_map["both"] = {0, 1};
    p.text_map["plus"] = {0};
    p.text_map["minus"] = {1};
    p.text_map["near_plus"] = {0, 2};
    p.text_map["near_minus"] = {1, 2};
    p.image_bandwidth = 0.1;
    return p;
}

inline GmmPrior point_mass_prior(Vec mu) {
    GmmPrior p;
    p.dim = static_cast<int>(mu.size());
    p.components.push_back({1.0, std::move(mu), 0.0});
    p.text_map["a"] = {0};
    return p;
}

inline GmmPrior single_gaussian_prior(Vec mu, double variance) {
    GmmPrior p;
    p.dim = static_cast<int>(mu.size());
    p.components.push_back({1.0, std::move(mu), variance});
    p.text_map["a"] = {0};
    return p;
}

inline RunConfig base_run(const std::string& text, int steps = 2000) {
    RunConfig rc;
    rc.steps = steps;
    rc.text = text;
    rc.optimizer = OptimKind::Sgd;
    rc.lr = 0.005;
    return rc;
}

}  // namespace sdlab::testing
