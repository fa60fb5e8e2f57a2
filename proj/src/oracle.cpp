#include "sdlab/oracle.hpp"

#include <algorithm>
#include <cmath>

namespace sdlab {
namespace oracle {

namespace {

// log density of the noised conditioned mixture at z, by direct summation
double log_density(const GmmPrior& noised, const Vec& z) {
    size_t K = noised.components.size();
    int d = noised.dim;
    std::vector<double> terms(K);
    for (size_t k = 0; k < K; ++k) {
        const auto& c = noised.components[k];
        if (!(c.variance > 0.0)) throw std::runtime_error("numeric_score: degenerate noised variance");
        terms[k] = std::log(c.weight) - 0.5 * squared_distance(z, c.mean) / c.variance -
                   0.5 * d * std::log(2.0 * M_PI * c.variance);
    }
    double mx = *std::max_element(terms.begin(), terms.end());
    if (!std::isfinite(mx))
        throw std::runtime_error("numeric_score: density underflow at extreme z_t");
    double sum = 0.0;
    for (double t : terms) sum += std::exp(t - mx);
    return mx + std::log(sum);
}

}  // namespace

Vec numeric_score(const GmmPrior& prior, const Vec& z_t, int t, const Condition& cond,
                  const NoiseSchedule& sched, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("numeric_score: h must be > 0");
    GmmPrior noised = noised_mixture(prior, t, cond, sched);
    double sigma = sched.sigma(t);
    Vec grad(z_t.size());
    Vec zp = z_t, zm = z_t;
    for (size_t i = 0; i < z_t.size(); ++i) {
        zp[i] = z_t[i] + h;
        zm[i] = z_t[i] - h;
        grad[i] = (log_density(noised, zp) - log_density(noised, zm)) / (2.0 * h);
        zp[i] = z_t[i];
        zm[i] = z_t[i];
    }
    return scale(grad, -sigma);
}

Vec fd_gradient(const std::function<double(const Vec&)>& loss, const Vec& theta, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("fd_gradient: h must be > 0");
    Vec grad(theta.size());
    Vec x = theta;
    for (size_t i = 0; i < theta.size(); ++i) {
        x[i] = theta[i] + h;
        double fp = loss(x);
        x[i] = theta[i] - h;
        double fm = loss(x);
        x[i] = theta[i];
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("fd_gradient: non-finite loss evaluation");
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

Vec posterior_mean(const GmmPrior& prior, const Vec& z_t, int t, const Condition& cond,
                   const NoiseSchedule& sched) {
    GmmPrior clean = conditioned_mixture(prior, cond);
    double ab = sched.alpha_bar(t);
    double c0 = std::sqrt(ab);
    int d = clean.dim;
    size_t K = clean.components.size();

    // posterior component responsibilities q_k ~ w_k N(z_t; sqrt(abar) mu_k, (abar v_k + 1 - abar) I)
    std::vector<double> logq(K);
    for (size_t k = 0; k < K; ++k) {
        const auto& c = clean.components[k];
        double s2 = ab * c.variance + (1.0 - ab);
        double q = 0.0;
        for (int i = 0; i < d; ++i) {
            double diff = z_t[static_cast<size_t>(i)] - c0 * c.mean[static_cast<size_t>(i)];
            q += diff * diff;
        }
        logq[k] = std::log(c.weight) - 0.5 * q / s2 - 0.5 * d * std::log(s2);
    }
    double mx = *std::max_element(logq.begin(), logq.end());
    double sum = 0.0;
    for (double lq : logq) sum += std::exp(lq - mx);

    Vec mean(static_cast<size_t>(d), 0.0);
    for (size_t k = 0; k < K; ++k) {
        double q = std::exp(logq[k] - mx) / sum;
        const auto& c = clean.components[k];
        double denom = (1.0 - ab) + ab * c.variance;
        for (int i = 0; i < d; ++i) {
            // linear-Gaussian posterior mean of z given z_t within component k
            double mk = ((1.0 - ab) * c.mean[static_cast<size_t>(i)] +
                         c0 * c.variance * z_t[static_cast<size_t>(i)]) /
                        denom;
            mean[static_cast<size_t>(i)] += q * mk;
        }
    }
    return mean;
}

}  // namespace oracle
}  // namespace sdlab
