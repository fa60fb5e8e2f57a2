#pragma once

#include <limits>
#include <memory>
#include <string>

#include "sdlab/denoiser.hpp"
#include "sdlab/guidance.hpp"
#include "sdlab/scene.hpp"

namespace sdlab {

enum class OptimKind { Sgd, Adam };
enum class PriorKind { Analytic, Learned };

struct InitSpec {
    enum class Kind { Zeros, Gauss, Explicit } kind = Kind::Zeros;
    double scale = 1.0;  // Gauss
    Vec value;           // Explicit
};

struct RunConfig {
    int steps = 1000;
    double lr = 0.01;
    OptimKind optimizer = OptimKind::Adam;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    double t_min_frac = 0.02, t_max_frac = 0.98;
    uint64_t seed = 0;
    int finetune_period = 10;
    double finetune_lr = 1e-4;
    GuidanceConfig guidance;
    PriorKind prior_kind = PriorKind::Analytic;
    std::string text;  // target label
    int particles = 1;
    InitSpec init;
    EncodeMode encode = EncodeMode::Identity;
    int metric_every = 0;       // source-target distance cadence; 0 = off
    int metric_target_samples = 10000;
    uint64_t metric_seed = 1234;

    void validate() const;
};

struct StepRecord {
    int tau = 0;
    int t = 0;      // particle 0
    int view = 0;   // particle 0
    Vec theta;      // particle centroid
    Vec grad_theta; // mean pullback gradient over particles
    double grad_norm = 0.0;
    double m1_norm = 0.0;
    double m2_norm = 0.0;
    double rec_loss = 0.0;
    double filter_mask = 1.0;  // mean over particles; 0/1 for single-particle runs
    double src_tgt = std::numeric_limits<double>::quiet_NaN();
};

struct Trajectory {
    std::vector<StepRecord> records;
    std::vector<std::pair<int, double>> metric_series;  // (tau, source-target distance), incl. tau = 0
    std::vector<Vec> final_thetas;
    std::string stream_hash;  // hex FNV-1a over the sampled (view, t, eps) draws
    bool aborted = false;
    std::string abort_reason;
};

/// Everything one run needs. The denoiser pointer is only used (and possibly
/// fine-tuned) when run.prior_kind == Learned.
struct Experiment {
    NoiseSchedule sched;
    GmmPrior prior;
    ViewSet views;
    RunConfig run;
    std::shared_ptr<Denoiser> denoiser;
};

/// One optimization step for a single particle state; exposed for tests.
struct ParticleState {
    Vec theta;
    Vec adam_m, adam_v;
    int adam_steps = 0;
    Rng rng{0};
    uint64_t draw_hash = 14695981039346656037ull;  // FNV-1a over (view, t, eps) draws
};

GuidanceResult optimizer_step(ParticleState& st, Experiment& exp, const NoisePredictor& pred,
                              int tau, Vec& grad_theta_out, int& t_out, int& view_out);

Trajectory run_experiment(Experiment& exp);

std::pair<int, int> timestep_bounds(const RunConfig& cfg, const NoiseSchedule& sched);

}  // namespace sdlab
