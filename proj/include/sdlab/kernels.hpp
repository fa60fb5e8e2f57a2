#pragma once

#include "sdlab/prior.hpp"

namespace sdlab {
namespace kernels {

// Data-parallel inner loops, each in a serial reference version and an OpenMP
// version. Both accumulate per-row partial sums and reduce them in index
// order, so results do not depend on the thread count.

/// row_sums[i] = sum_j || x_i - y_j ||, x n-by-d and y m-by-d row-major.
void pairwise_row_sums_serial(const double* x, int n, const double* y, int m, int d,
                              double* row_sums);
void pairwise_row_sums_parallel(const double* x, int n, const double* y, int m, int d,
                                double* row_sums);

/// mean over all (i, j) of || x_i - y_j ||
double mean_pairwise_distance(const double* x, int n, const double* y, int m, int d, bool parallel);

/// Energy distance (V-statistic): 2 E||X-Y|| - E||X-X'|| - E||Y-Y'||.
double energy_distance(const std::vector<double>& x, int n, const std::vector<double>& y, int m,
                       int d, bool parallel = true);

/// Analytic noise predictions for a batch of (z_t, t) pairs under one condition.
void predict_noise_batch_serial(const GmmPrior& prior, const Condition& cond, const double* zs,
                                const int* ts, int n, const NoiseSchedule& sched, double* out);
void predict_noise_batch_parallel(const GmmPrior& prior, const Condition& cond, const double* zs,
                                  const int* ts, int n, const NoiseSchedule& sched, double* out);

std::vector<double> flatten(const std::vector<Vec>& rows);

}  // namespace kernels
}  // namespace sdlab
