#include "sdlab/metrics.hpp"

#include <cmath>

#include "sdlab/optimizer.hpp"

namespace sdlab {

std::pair<double, int> nearest_mode(const Vec& x, const GmmPrior& prior, const std::string& text) {
    const auto& idx = prior.subset(text);
    double best = std::numeric_limits<double>::infinity();
    int best_k = -1;
    for (int k : idx) {
        double d = distance(x, prior.components[static_cast<size_t>(k)].mean);
        if (d < best) {  // strict: ties keep the lowest index
            best = d;
            best_k = k;
        }
    }
    return {best, best_k};
}

double update_coherence(const Trajectory& traj) {
    double acc = 0.0;
    int pairs = 0;
    const Vec* prev = nullptr;
    double prev_norm = 0.0;
    for (const auto& rec : traj.records) {
        double n = norm(rec.grad_theta);
        if (n == 0.0) continue;
        if (prev) {
            acc += dot(*prev, rec.grad_theta) / (prev_norm * n);
            ++pairs;
        }
        prev = &rec.grad_theta;
        prev_norm = n;
    }
    if (pairs < 1) throw std::invalid_argument("update_coherence: fewer than 2 usable steps");
    return acc / pairs;
}

double view_consistency(const std::vector<Vec>& particles, const ViewSet& views,
                        const GmmPrior& prior, const std::string& text) {
    size_t V = views.views.size();
    if (V < 2) throw std::invalid_argument("view_consistency: needs at least 2 views");
    long agree = 0, total = 0;
    for (const auto& theta : particles) {
        std::vector<int> modes(V);
        for (size_t v = 0; v < V; ++v)
            modes[v] = nearest_mode(render(theta, views.views[v]), prior, text).second;
        for (size_t a = 0; a < V; ++a)
            for (size_t b = a + 1; b < V; ++b) {
                agree += modes[a] == modes[b];
                ++total;
            }
    }
    return static_cast<double>(agree) / static_cast<double>(total);
}

SourceTargetMetric::SourceTargetMetric(const GmmPrior& prior, const std::string& text,
                                       uint64_t seed, int n_target) {
    if (n_target < 2) throw std::invalid_argument("SourceTargetMetric: n_target must be >= 2");
    n_ = n_target;
    d_ = prior.dim;
    target_.reserve(static_cast<size_t>(n_target) * d_);
    Rng rng(mix_seed(seed, 0x74676574));
    Condition cond = Condition::text(text);
    GmmPrior conditioned = conditioned_mixture(prior, cond);
    for (int i = 0; i < n_target; ++i) {
        // sample from the pre-conditioned mixture directly
        double u = rng.uniform();
        double acc = 0.0;
        size_t pick = conditioned.components.size() - 1;
        for (size_t k = 0; k < conditioned.components.size(); ++k) {
            acc += conditioned.components[k].weight;
            if (u < acc) {
                pick = k;
                break;
            }
        }
        const auto& c = conditioned.components[pick];
        double sd = std::sqrt(c.variance);
        for (int j = 0; j < d_; ++j)
            target_.push_back(c.mean[static_cast<size_t>(j)] + sd * rng.normal());
    }
    yy_term_ = kernels::mean_pairwise_distance(target_.data(), n_, target_.data(), n_, d_, true);
}

double SourceTargetMetric::evaluate(const std::vector<Vec>& particles) const {
    if (particles.size() < 2)
        throw std::invalid_argument("source_target_distance: ensemble size must be >= 2");
    std::vector<double> flat = kernels::flatten(particles);
    int n = static_cast<int>(particles.size());
    double xy = kernels::mean_pairwise_distance(flat.data(), n, target_.data(), n_, d_, true);
    double xx = kernels::mean_pairwise_distance(flat.data(), n, flat.data(), n, d_, true);
    return 2.0 * xy - xx - yy_term_;
}

double source_target_distance(const std::vector<Vec>& particles, const GmmPrior& prior,
                              const std::string& text, uint64_t seed, int n_target) {
    SourceTargetMetric metric(prior, text, seed, n_target);
    return metric.evaluate(particles);
}

}  // namespace sdlab
