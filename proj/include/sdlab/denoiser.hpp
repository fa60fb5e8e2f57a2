#pragma once

#include <string>

#include "sdlab/guidance.hpp"
#include "sdlab/prior.hpp"

namespace sdlab {

struct Tensor {
    std::string name;
    std::vector<int> shape;
    Vec data;
    int rows() const { return shape[0]; }
    int cols() const { return shape.size() > 1 ? shape[1] : 1; }
};

/// Tiny trainable denoiser: an MLP trunk over
/// [z_t, time features, text embedding, adapter output], plus a two-layer
/// image adapter whose final layer is the only part unfrozen by fine-tuning.
/// With no image condition the adapter output is the zero vector.
struct Denoiser {
    int dim = 0;
    int total_steps = 0;
    int time_freqs = 8;
    int text_dim = 8;
    int adapter_hidden = 32;
    int adapter_out = 8;
    int width = 128;
    std::vector<std::string> labels;  // embedding row per label; final row is the null embedding

    std::vector<Tensor> params;  // fixed order, see make_denoiser

    int input_dim() const { return dim + 2 * time_freqs + text_dim + adapter_out; }
    int label_index(const std::string& label) const;

    const Tensor& tensor(const std::string& name) const;
    Tensor& tensor(const std::string& name);

    Vec predict(const Vec& z_t, int t, const Condition& cond) const;
};

Denoiser make_denoiser(const GmmPrior& prior, const NoiseSchedule& sched, uint64_t seed,
                       int width = 128, int adapter_hidden = 32);

struct PretrainConfig {
    int steps = 20000;
    int batch = 64;
    double lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    uint64_t seed = 0;
};

/// Denoising score matching against the analytic prior: z from the
/// text-conditioned mixture, t uniform, eps standard normal; the image
/// condition is the clean z with probability 0.5 (else absent) and the text
/// condition is dropped to null with probability 0.5. Returns the per-step
/// mean loss curve (per-dimension MSE).
std::vector<double> pretrain(Denoiser& model, const GmmPrior& prior, const NoiseSchedule& sched,
                             const PretrainConfig& cfg);

/// One reconstruction-loss gradient step on the adapter's final layer only;
/// returns the pre-step rec loss (per-dimension, identity decoder).
double finetune_adapter_step(Denoiser& model, const Vec& z_t, int t, const Vec& image,
                             const NoiseSchedule& sched, double lr);

double rec_loss_learned(const Denoiser& model, const Vec& z_t, int t, const Vec& image,
                        const NoiseSchedule& sched);

void save_checkpoint(const Denoiser& model, const std::string& path);
Denoiser load_checkpoint(const std::string& path);

struct LearnedPredictor final : NoisePredictor {
    const Denoiser* model;
    explicit LearnedPredictor(const Denoiser& m) : model(&m) {}
    int dim() const override { return model->dim; }
    Vec predict(const Vec& z_t, int t, const Condition& cond) const override {
        return model->predict(z_t, t, cond);
    }
};

}  // namespace sdlab
