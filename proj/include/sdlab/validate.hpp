#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "sdlab/prior.hpp"

namespace sdlab {

struct CheckResult {
    std::string name;
    double tolerance = 0.0;
    double observed = 0.0;
    bool pass = false;
    std::string detail;
};

struct ValidateOptions {
    double eta_scale = 1.0;  // mutation hook for sensitivity tests
};

/// Oracle and algebraic-identity suite backing `sdlab validate`.
std::vector<CheckResult> run_validation(const ValidateOptions& opts = {});

nlohmann::json validation_report(const std::vector<CheckResult>& checks);

/// Random isotropic mixture with one "a" label over a random non-empty proper
/// subset (when more than one component); shared by the suite and the tests.
GmmPrior random_mixture(Rng& rng, int max_dim = 4, int max_components = 5);

Condition random_condition(Rng& rng, const GmmPrior& prior, bool allow_image = true);

}  // namespace sdlab
