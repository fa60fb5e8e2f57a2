// Benchmarks the OpenMP kernels against their serial reference versions and
// reports throughput plus the max deviation between the two paths.

#include <chrono>
#include <cstdio>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sdlab/kernels.hpp"
#include "sdlab/rng.hpp"
#include "sdlab/validate.hpp"

using namespace sdlab;

namespace {

double now_s() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

template <typename F>
double time_best_of(int reps, F&& f) {
    double best = 1e300;
    for (int i = 0; i < reps; ++i) {
        double t0 = now_s();
        f();
        best = std::min(best, now_s() - t0);
    }
    return best;
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
    std::printf("OpenMP not enabled; both paths run serially\n");
#endif
    std::printf("%-34s %12s %12s %9s %12s\n", "kernel", "serial [s]", "parallel [s]", "speedup",
                "max |diff|");

    Rng rng(42);

    {  // pairwise distance row sums (energy-distance core)
        int n = 3000, m = 3000, d = 2;
        std::vector<double> x(static_cast<size_t>(n) * d), y(static_cast<size_t>(m) * d);
        for (auto& v : x) v = rng.normal();
        for (auto& v : y) v = rng.normal() + 1.0;
        std::vector<double> rs(static_cast<size_t>(n)), rp(static_cast<size_t>(n));
        double ts = time_best_of(3, [&] {
            kernels::pairwise_row_sums_serial(x.data(), n, y.data(), m, d, rs.data());
        });
        double tp = time_best_of(3, [&] {
            kernels::pairwise_row_sums_parallel(x.data(), n, y.data(), m, d, rp.data());
        });
        double diff = 0.0;
        for (int i = 0; i < n; ++i) diff = std::max(diff, std::fabs(rs[i] - rp[i]));
        std::printf("%-34s %12.4f %12.4f %8.2fx %12.3e\n", "pairwise_row_sums 3000x3000 d=2", ts, tp,
                    ts / tp, diff);
    }

    {  // batched analytic noise prediction
        Rng prng(7);
        GmmPrior prior = random_mixture(prng, 2, 4);
        prior.dim = 2;
        NoiseSchedule sched = make_schedule(1000, 1e-4, 0.02);
        int n = 200000;
        std::vector<double> zs(static_cast<size_t>(n) * 2);
        std::vector<int> ts_(static_cast<size_t>(n));
        for (auto& v : zs) v = rng.normal();
        for (auto& t : ts_) t = rng.uniform_int(1, 1000);
        std::vector<double> outs(zs.size()), outp(zs.size());
        Condition cond = Condition::text("a");
        double ts = time_best_of(3, [&] {
            kernels::predict_noise_batch_serial(prior, cond, zs.data(), ts_.data(), n, sched, outs.data());
        });
        double tp = time_best_of(3, [&] {
            kernels::predict_noise_batch_parallel(prior, cond, zs.data(), ts_.data(), n, sched, outp.data());
        });
        double diff = 0.0;
        for (size_t i = 0; i < outs.size(); ++i) diff = std::max(diff, std::fabs(outs[i] - outp[i]));
        std::printf("%-34s %12.4f %12.4f %8.2fx %12.3e\n", "predict_noise_batch n=200k", ts, tp,
                    ts / tp, diff);
    }

    {  // full energy distance as used by the transport metric
        int n = 256, m = 10000, d = 2;
        std::vector<double> x(static_cast<size_t>(n) * d), y(static_cast<size_t>(m) * d);
        for (auto& v : x) v = rng.normal();
        for (auto& v : y) v = rng.normal() + 2.0;
        double es = 0.0, ep = 0.0;
        double ts = time_best_of(3, [&] { es = kernels::energy_distance(x, n, y, m, d, false); });
        double tp = time_best_of(3, [&] { ep = kernels::energy_distance(x, n, y, m, d, true); });
        std::printf("%-34s %12.4f %12.4f %8.2fx %12.3e\n", "energy_distance 256 vs 10000", ts, tp,
                    ts / tp, std::fabs(es - ep));
    }

    return 0;
}
