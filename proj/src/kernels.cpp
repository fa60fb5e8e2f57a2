#include "sdlab/kernels.hpp"

#include <cmath>

namespace sdlab {
namespace kernels {

namespace {

inline double row_sum(const double* xi, const double* y, int m, int d) {
    double acc = 0.0;
    for (int j = 0; j < m; ++j) {
        const double* yj = y + static_cast<size_t>(j) * d;
        double q = 0.0;
        for (int k = 0; k < d; ++k) {
            double diff = xi[k] - yj[k];
            q += diff * diff;
        }
        acc += std::sqrt(q);
    }
    return acc;
}

}  // namespace

void pairwise_row_sums_serial(const double* x, int n, const double* y, int m, int d,
                              double* row_sums) {
    for (int i = 0; i < n; ++i)
        row_sums[i] = row_sum(x + static_cast<size_t>(i) * d, y, m, d);
}

void pairwise_row_sums_parallel(const double* x, int n, const double* y, int m, int d,
                                double* row_sums) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i)
        row_sums[i] = row_sum(x + static_cast<size_t>(i) * d, y, m, d);
}

double mean_pairwise_distance(const double* x, int n, const double* y, int m, int d, bool parallel) {
    if (n <= 0 || m <= 0) throw std::invalid_argument("mean_pairwise_distance: empty sample set");
    std::vector<double> rows(static_cast<size_t>(n));
    if (parallel)
        pairwise_row_sums_parallel(x, n, y, m, d, rows.data());
    else
        pairwise_row_sums_serial(x, n, y, m, d, rows.data());
    double acc = 0.0;
    for (double r : rows) acc += r;  // index order, thread-count independent
    return acc / (static_cast<double>(n) * static_cast<double>(m));
}

double energy_distance(const std::vector<double>& x, int n, const std::vector<double>& y, int m,
                       int d, bool parallel) {
    if (static_cast<size_t>(n) * d != x.size() || static_cast<size_t>(m) * d != y.size())
        throw std::invalid_argument("energy_distance: size mismatch");
    double xy = mean_pairwise_distance(x.data(), n, y.data(), m, d, parallel);
    double xx = mean_pairwise_distance(x.data(), n, x.data(), n, d, parallel);
    double yy = mean_pairwise_distance(y.data(), m, y.data(), m, d, parallel);
    return 2.0 * xy - xx - yy;
}

namespace {

void predict_batch(const GmmPrior& prior, const Condition& cond, const double* zs, const int* ts,
                   int n, const NoiseSchedule& sched, double* out, bool parallel) {
    GmmPrior conditioned = conditioned_mixture(prior, cond);
    int d = prior.dim;
#pragma omp parallel for schedule(static) if (parallel)
    for (int i = 0; i < n; ++i) {
        Vec z(zs + static_cast<size_t>(i) * d, zs + static_cast<size_t>(i + 1) * d);
        Vec e = predict_noise_conditioned(conditioned, z, ts[i], sched);
        for (int k = 0; k < d; ++k) out[static_cast<size_t>(i) * d + k] = e[static_cast<size_t>(k)];
    }
}

}  // namespace

void predict_noise_batch_serial(const GmmPrior& prior, const Condition& cond, const double* zs,
                                const int* ts, int n, const NoiseSchedule& sched, double* out) {
    predict_batch(prior, cond, zs, ts, n, sched, out, false);
}

void predict_noise_batch_parallel(const GmmPrior& prior, const Condition& cond, const double* zs,
                                  const int* ts, int n, const NoiseSchedule& sched, double* out) {
    predict_batch(prior, cond, zs, ts, n, sched, out, true);
}

std::vector<double> flatten(const std::vector<Vec>& rows) {
    std::vector<double> flat;
    if (rows.empty()) return flat;
    flat.reserve(rows.size() * rows[0].size());
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    return flat;
}

}  // namespace kernels
}  // namespace sdlab
