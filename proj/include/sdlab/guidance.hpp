#pragma once

#include <memory>

#include "sdlab/prior.hpp"

namespace sdlab {

/// Noise-prediction backend shared by the guidance variants; realized by the
/// analytic mixture prior or by a trained denoiser.
struct NoisePredictor {
    virtual ~NoisePredictor() = default;
    virtual int dim() const = 0;
    virtual Vec predict(const Vec& z_t, int t, const Condition& cond) const = 0;
};

struct AnalyticPredictor final : NoisePredictor {
    const GmmPrior* prior;
    const NoiseSchedule* sched;
    AnalyticPredictor(const GmmPrior& p, const NoiseSchedule& s) : prior(&p), sched(&s) {}
    int dim() const override { return prior->dim; }
    Vec predict(const Vec& z_t, int t, const Condition& cond) const override {
        return predict_noise(*prior, z_t, t, cond, *sched);
    }
};

enum class GuidanceVariant { VanillaSds, AnchorDs, AnchorDsFilter, AnchorDsFinetune, NegSource };

const char* variant_name(GuidanceVariant v);
GuidanceVariant variant_from_name(const std::string& name);
bool variant_is_anchored(GuidanceVariant v);

double default_omega(GuidanceVariant v);  // 100 for vanilla-sds, 7.5 otherwise

struct GuidanceConfig {
    GuidanceVariant variant = GuidanceVariant::AnchorDs;
    double omega = 7.5;
    double gamma = 0.03;
    bool include_m2 = true;
    bool target_cfg = false;
    std::string neg_label;  // neg-source source label; optional negative anchor for anchords
    WeightMode weight_mode = WeightMode::ConstantOne;
};

struct GuidanceResult {
    Vec eps_target;    // target-branch prediction (CFG-combined where applicable)
    Vec eps_source;    // source-branch prediction
    Vec eps_uncond;    // unconditional prediction, when computed
    Vec m1, m2;
    Vec zhat_target;   // pseudo-reconstruction from the raw text-conditioned prediction
    Vec zhat_source;   // pseudo-reconstruction from the unconditional prediction
    Vec zhat_anchored; // pseudo-reconstruction from the source-branch prediction
    double rec_loss = 0.0;  // ||zhat_anchored - image||^2 / d (per-dimension)
    int filter_mask = 1;
    Vec grad_z;        // residual multiplied into dz/dTheta by the caller
};

/// (1 + omega) * eps_cond - omega * eps_uncond
Vec cfg_combine(const Vec& eps_cond, const Vec& eps_uncond, double omega);

/// w(t) * (eps_cfg - eps)
Vec sds_residual(const Vec& eps_cfg, const Vec& eps, int t, const NoiseSchedule& sched, WeightMode mode);

/// m1 = eps_cond - eps_uncond, m2 = eps_uncond - eps
std::pair<Vec, Vec> decompose(const Vec& eps_cond, const Vec& eps_uncond, const Vec& eps);

/// coeff * m1 + m2; used to measure which coefficient makes the CFG residual
/// reconstruction exact (omega + 1 does; the printed omega - 1 does not).
Vec residual_from_terms(const Vec& m1, const Vec& m2, double coeff);

/// (z_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t)
Vec pseudo_reconstruct(const Vec& z_t, const Vec& eps_hat, int t, const NoiseSchedule& sched);

/// 1 iff rec_loss < gamma (strict; equality is rejected)
int filter_mask(double rec_loss, double gamma);

GuidanceResult vanilla_sds_guidance(const NoisePredictor& pred, const Vec& z_t, int t,
                                    const std::string& text, const GuidanceConfig& cfg,
                                    const Vec& eps, const NoiseSchedule& sched);

GuidanceResult anchords_guidance(const NoisePredictor& pred, const Vec& z_t, int t,
                                 const std::string& text, const Vec& image,
                                 const GuidanceConfig& cfg, const Vec& eps,
                                 const NoiseSchedule& sched);

GuidanceResult neg_source_guidance(const NoisePredictor& pred, const Vec& z_t, int t,
                                   const std::string& text, const std::string& y_neg,
                                   const GuidanceConfig& cfg, const Vec& eps,
                                   const NoiseSchedule& sched);

/// Routes to the variant in cfg; `image` is the encoded render of the current
/// state and also feeds the source-reconstruction diagnostic for the variants
/// that do not consume it.
GuidanceResult compute_guidance(const NoisePredictor& pred, const Vec& z_t, int t,
                                const std::string& text, const Vec& image,
                                const GuidanceConfig& cfg, const Vec& eps,
                                const NoiseSchedule& sched);

}  // namespace sdlab
