#include "sdlab/guidance.hpp"

#include <cmath>

namespace sdlab {

const char* variant_name(GuidanceVariant v) {
    switch (v) {
        case GuidanceVariant::VanillaSds: return "vanilla-sds";
        case GuidanceVariant::AnchorDs: return "anchords";
        case GuidanceVariant::AnchorDsFilter: return "anchords-filter";
        case GuidanceVariant::AnchorDsFinetune: return "anchords-finetune";
        case GuidanceVariant::NegSource: return "neg-source";
    }
    return "?";
}

GuidanceVariant variant_from_name(const std::string& name) {
    if (name == "vanilla-sds") return GuidanceVariant::VanillaSds;
    if (name == "anchords") return GuidanceVariant::AnchorDs;
    if (name == "anchords-filter") return GuidanceVariant::AnchorDsFilter;
    if (name == "anchords-finetune") return GuidanceVariant::AnchorDsFinetune;
    if (name == "neg-source") return GuidanceVariant::NegSource;
    throw std::invalid_argument("unknown guidance variant '" + name + "'");
}

bool variant_is_anchored(GuidanceVariant v) {
    return v == GuidanceVariant::AnchorDs || v == GuidanceVariant::AnchorDsFilter ||
           v == GuidanceVariant::AnchorDsFinetune;
}

double default_omega(GuidanceVariant v) {
    return v == GuidanceVariant::VanillaSds ? 100.0 : 7.5;
}

Vec cfg_combine(const Vec& eps_cond, const Vec& eps_uncond, double omega) {
    check_same_dim(eps_cond, eps_uncond, "cfg_combine");
    Vec r(eps_cond.size());
    for (size_t i = 0; i < r.size(); ++i)
        r[i] = (1.0 + omega) * eps_cond[i] - omega * eps_uncond[i];
    return r;
}

Vec sds_residual(const Vec& eps_cfg, const Vec& eps, int t, const NoiseSchedule& sched,
                 WeightMode mode) {
    check_same_dim(eps_cfg, eps, "sds_residual");
    double w = weight_w(t, sched, mode);
    Vec r(eps_cfg.size());
    for (size_t i = 0; i < r.size(); ++i) r[i] = w * (eps_cfg[i] - eps[i]);
    return r;
}

std::pair<Vec, Vec> decompose(const Vec& eps_cond, const Vec& eps_uncond, const Vec& eps) {
    return {sub(eps_cond, eps_uncond), sub(eps_uncond, eps)};
}

Vec residual_from_terms(const Vec& m1, const Vec& m2, double coeff) {
    check_same_dim(m1, m2, "residual_from_terms");
    Vec r(m1.size());
    for (size_t i = 0; i < r.size(); ++i) r[i] = coeff * m1[i] + m2[i];
    return r;
}

Vec pseudo_reconstruct(const Vec& z_t, const Vec& eps_hat, int t, const NoiseSchedule& sched) {
    check_same_dim(z_t, eps_hat, "pseudo_reconstruct");
    double ab = sched.alpha_bar(t);
    if (!(ab > 0.0)) throw std::invalid_argument("pseudo_reconstruct: alpha_bar must be > 0");
    double c0 = std::sqrt(ab);
    double c1 = std::sqrt(1.0 - ab);
    Vec r(z_t.size());
    for (size_t i = 0; i < r.size(); ++i) r[i] = (z_t[i] - c1 * eps_hat[i]) / c0;
    return r;
}

int filter_mask(double rec_loss, double gamma) {
    if (!(gamma > 0.0)) throw std::invalid_argument("filter_mask: gamma must be > 0");
    return rec_loss < gamma ? 1 : 0;
}

GuidanceResult vanilla_sds_guidance(const NoisePredictor& pred, const Vec& z_t, int t,
                                    const std::string& text, const GuidanceConfig& cfg,
                                    const Vec& eps, const NoiseSchedule& sched) {
    GuidanceResult r;
    Vec eps_text = pred.predict(z_t, t, Condition::text(text));
    r.eps_uncond = pred.predict(z_t, t, Condition::null());
    r.eps_target = cfg_combine(eps_text, r.eps_uncond, cfg.omega);
    r.eps_source = r.eps_uncond;
    std::tie(r.m1, r.m2) = decompose(eps_text, r.eps_uncond, eps);
    r.zhat_target = pseudo_reconstruct(z_t, eps_text, t, sched);
    r.zhat_source = pseudo_reconstruct(z_t, r.eps_uncond, t, sched);
    r.zhat_anchored = r.zhat_source;
    r.grad_z = sds_residual(r.eps_target, eps, t, sched, cfg.weight_mode);
    return r;
}

namespace {

GuidanceResult anchored_family(const NoisePredictor& pred, const Vec& z_t, int t,
                               const std::string& text, const Condition& source_cond,
                               const Vec* image, const GuidanceConfig& cfg, const Vec& eps,
                               const NoiseSchedule& sched) {
    GuidanceResult r;
    Vec eps_text = pred.predict(z_t, t, Condition::text(text));
    r.eps_uncond = pred.predict(z_t, t, Condition::null());
    r.eps_target = cfg.target_cfg ? cfg_combine(eps_text, r.eps_uncond, cfg.omega) : eps_text;
    r.eps_source = pred.predict(z_t, t, source_cond);
    std::tie(r.m1, r.m2) = decompose(eps_text, r.eps_uncond, eps);
    r.zhat_target = pseudo_reconstruct(z_t, eps_text, t, sched);
    r.zhat_source = pseudo_reconstruct(z_t, r.eps_uncond, t, sched);
    r.zhat_anchored = pseudo_reconstruct(z_t, r.eps_source, t, sched);

    Vec residual = sub(r.eps_target, r.eps_source);
    if (cfg.include_m2) residual = add(residual, r.m2);
    r.grad_z = scale(residual, weight_w(t, sched, cfg.weight_mode));

    if (image) {
        double d = static_cast<double>(image->size());
        r.rec_loss = squared_distance(r.zhat_anchored, *image) / d;
        r.filter_mask = filter_mask(r.rec_loss, cfg.gamma);
        if (cfg.variant == GuidanceVariant::AnchorDsFilter && r.filter_mask == 0)
            r.grad_z.assign(r.grad_z.size(), 0.0);
    }
    return r;
}

}  // namespace

GuidanceResult anchords_guidance(const NoisePredictor& pred, const Vec& z_t, int t,
                                 const std::string& text, const Vec& image,
                                 const GuidanceConfig& cfg, const Vec& eps,
                                 const NoiseSchedule& sched) {
    if (static_cast<int>(image.size()) != pred.dim())
        throw std::invalid_argument("anchords_guidance: image has wrong dimension");
    Condition src = cfg.neg_label.empty() ? Condition::null() : Condition::negative(cfg.neg_label);
    return anchored_family(pred, z_t, t, text, src.with_image(image), &image, cfg, eps, sched);
}

GuidanceResult neg_source_guidance(const NoisePredictor& pred, const Vec& z_t, int t,
                                   const std::string& text, const std::string& y_neg,
                                   const GuidanceConfig& cfg, const Vec& eps,
                                   const NoiseSchedule& sched) {
    if (y_neg.empty()) throw std::invalid_argument("neg_source_guidance: y_neg required");
    return anchored_family(pred, z_t, t, text, Condition::text(y_neg), nullptr, cfg, eps, sched);
}

GuidanceResult compute_guidance(const NoisePredictor& pred, const Vec& z_t, int t,
                                const std::string& text, const Vec& image,
                                const GuidanceConfig& cfg, const Vec& eps,
                                const NoiseSchedule& sched) {
    GuidanceResult r;
    switch (cfg.variant) {
        case GuidanceVariant::VanillaSds:
            r = vanilla_sds_guidance(pred, z_t, t, text, cfg, eps, sched);
            break;
        case GuidanceVariant::AnchorDs:
        case GuidanceVariant::AnchorDsFilter:
        case GuidanceVariant::AnchorDsFinetune:
            return anchords_guidance(pred, z_t, t, text, image, cfg, eps, sched);
        case GuidanceVariant::NegSource:
            r = neg_source_guidance(pred, z_t, t, text, cfg.neg_label, cfg, eps, sched);
            break;
    }
    // source-reconstruction diagnostic for the variants without an image input
    double d = static_cast<double>(image.size());
    r.rec_loss = squared_distance(r.zhat_anchored, image) / d;
    return r;
}

}  // namespace sdlab
