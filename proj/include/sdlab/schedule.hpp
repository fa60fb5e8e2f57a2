#pragma once

#include "sdlab/vec.hpp"

namespace sdlab {

/// Discrete DDPM noise schedule. Timesteps are 1-indexed: t in [1, total_steps].
struct NoiseSchedule {
    int total_steps = 0;
    Vec betas;       // beta_t at index t-1
    Vec alpha_bars;  // prod_{s<=t} (1 - beta_s) at index t-1

    double alpha_bar(int t) const {
        check_t(t);
        return alpha_bars[static_cast<size_t>(t - 1)];
    }
    double beta(int t) const {
        check_t(t);
        return betas[static_cast<size_t>(t - 1)];
    }
    double sigma(int t) const { return std::sqrt(1.0 - alpha_bar(t)); }

    void check_t(int t) const {
        if (t < 1 || t > total_steps)
            throw std::invalid_argument("timestep " + std::to_string(t) + " out of range [1, " +
                                        std::to_string(total_steps) + "]");
    }
};

enum class WeightMode { ConstantOne, SigmaSquared };

NoiseSchedule make_schedule(int total_steps, double beta_start, double beta_end);

/// z_t = sqrt(abar_t) z + sqrt(1 - abar_t) eps
Vec add_noise(const Vec& z, int t, const Vec& eps, const NoiseSchedule& sched);

/// eta_t = sqrt(abar_t) / sqrt(1 - abar_t)
double eta(int t, const NoiseSchedule& sched);

double weight_w(int t, const NoiseSchedule& sched, WeightMode mode);

}  // namespace sdlab
