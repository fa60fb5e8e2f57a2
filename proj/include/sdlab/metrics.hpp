#pragma once

#include "sdlab/kernels.hpp"
#include "sdlab/prior.hpp"
#include "sdlab/scene.hpp"

namespace sdlab {

struct Trajectory;  // optimizer.hpp

/// Distance to the nearest component mean in the label's subset, with the
/// argmin component index (ties resolved to the lowest index).
std::pair<double, int> nearest_mode(const Vec& x, const GmmPrior& prior, const std::string& text);

/// Mean cosine similarity between consecutive per-step parameter gradients,
/// skipping zero-gradient steps. Throws if fewer than 2 usable steps.
double update_coherence(const Trajectory& traj);

/// Fraction of (particle, view pair) combinations whose renders map to the
/// same nearest mode.
double view_consistency(const std::vector<Vec>& particles, const ViewSet& views,
                        const GmmPrior& prior, const std::string& text);

/// Energy distance between the particle set and n_target seeded samples of the
/// text-conditioned prior.
double source_target_distance(const std::vector<Vec>& particles, const GmmPrior& prior,
                              const std::string& text, uint64_t seed, int n_target = 10000);

/// Reusable evaluator for per-step transport tracking: target samples and
/// their internal distance term are drawn once and cached.
class SourceTargetMetric {
public:
    SourceTargetMetric(const GmmPrior& prior, const std::string& text, uint64_t seed, int n_target);
    double evaluate(const std::vector<Vec>& particles) const;

private:
    std::vector<double> target_;
    int n_ = 0;
    int d_ = 0;
    double yy_term_ = 0.0;
};

}  // namespace sdlab
