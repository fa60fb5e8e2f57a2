#include "sdlab/schedule.hpp"

namespace sdlab {

NoiseSchedule make_schedule(int total_steps, double beta_start, double beta_end) {
    if (total_steps < 2) throw std::invalid_argument("make_schedule: total_steps must be >= 2");
    if (!(beta_start > 0.0) || !(beta_end < 1.0) || !(beta_start <= beta_end))
        throw std::invalid_argument("make_schedule: need 0 < beta_start <= beta_end < 1");

    NoiseSchedule s;
    s.total_steps = total_steps;
    s.betas.resize(static_cast<size_t>(total_steps));
    s.alpha_bars.resize(static_cast<size_t>(total_steps));
    double prod = 1.0;
    for (int t = 1; t <= total_steps; ++t) {
        double frac = static_cast<double>(t - 1) / static_cast<double>(total_steps - 1);
        double beta = beta_start + (beta_end - beta_start) * frac;
        prod *= 1.0 - beta;
        s.betas[static_cast<size_t>(t - 1)] = beta;
        s.alpha_bars[static_cast<size_t>(t - 1)] = prod;
    }
    return s;
}

Vec add_noise(const Vec& z, int t, const Vec& eps, const NoiseSchedule& sched) {
    check_same_dim(z, eps, "add_noise");
    double ab = sched.alpha_bar(t);
    double c0 = std::sqrt(ab);
    double c1 = std::sqrt(1.0 - ab);
    Vec r(z.size());
    for (size_t i = 0; i < z.size(); ++i) r[i] = c0 * z[i] + c1 * eps[i];
    return r;
}

double eta(int t, const NoiseSchedule& sched) {
    double ab = sched.alpha_bar(t);
    return std::sqrt(ab) / std::sqrt(1.0 - ab);
}

double weight_w(int t, const NoiseSchedule& sched, WeightMode mode) {
    sched.check_t(t);
    switch (mode) {
        case WeightMode::ConstantOne: return 1.0;
        case WeightMode::SigmaSquared: return 1.0 - sched.alpha_bar(t);
    }
    throw std::invalid_argument("weight_w: unknown mode");
}

}  // namespace sdlab
