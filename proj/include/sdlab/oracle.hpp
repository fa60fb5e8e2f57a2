#pragma once

#include <functional>

#include "sdlab/prior.hpp"

namespace sdlab {
namespace oracle {

/// -sigma_t * central finite differences of log p(z_t; t, cond), with the log
/// density evaluated by direct summation over the noised mixture components.
/// Never touches the responsibility-weighted score path it validates.
Vec numeric_score(const GmmPrior& prior, const Vec& z_t, int t, const Condition& cond,
                  const NoiseSchedule& sched, double h);

/// Central differences per coordinate. The evaluator must be deterministic
/// (frozen randomness) for the duration of the call.
Vec fd_gradient(const std::function<double(const Vec&)>& loss, const Vec& theta, double h);

/// E[z | z_t] by exact component-wise Gaussian posterior mixing; an
/// independent derivation from the score path (Tweedie cross-check).
Vec posterior_mean(const GmmPrior& prior, const Vec& z_t, int t, const Condition& cond,
                   const NoiseSchedule& sched);

}  // namespace oracle
}  // namespace sdlab
