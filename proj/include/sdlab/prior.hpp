#pragma once

#include <map>
#include <optional>
#include <string>

#include "sdlab/rng.hpp"
#include "sdlab/schedule.hpp"
#include "sdlab/vec.hpp"

namespace sdlab {

struct GmmComponent {
    double weight = 1.0;
    Vec mean;
    double variance = 0.0;  // isotropic; 0 denotes a point mass
};

/// Gaussian-mixture latent prior with exact conditional noise predictions.
/// Text labels select component subsets; an image condition multiplies each
/// component by N(z; image, rho^2 I) (Gaussian product rule, renormalized).
struct GmmPrior {
    int dim = 0;
    std::vector<GmmComponent> components;
    std::map<std::string, std::vector<int>> text_map;
    double image_bandwidth = 0.1;  // rho

    void validate() const;
    const std::vector<int>& subset(const std::string& label) const;
};

enum class TextCond { Null, Label, NegLabel };

struct Condition {
    TextCond kind = TextCond::Null;
    std::string label;
    std::optional<Vec> image;

    static Condition null() { return {}; }
    static Condition text(std::string l) { return {TextCond::Label, std::move(l), std::nullopt}; }
    static Condition negative(std::string l) { return {TextCond::NegLabel, std::move(l), std::nullopt}; }
    Condition with_image(Vec img) const {
        Condition c = *this;
        c.image = std::move(img);
        return c;
    }
};

/// Clean (t=0) mixture after applying the condition: subset restriction for a
/// label, complement restriction for a negative label, Gaussian-product
/// reweighting for an image.
GmmPrior conditioned_mixture(const GmmPrior& prior, const Condition& cond);

/// Mixture describing z_t: means scaled by sqrt(abar), variances mapped to
/// abar*v + (1 - abar), applied after conditioning.
GmmPrior noised_mixture(const GmmPrior& prior, int t, const Condition& cond, const NoiseSchedule& sched);

/// eps_hat = -sigma_t * grad log p(z_t; t, cond), in closed form.
Vec predict_noise(const GmmPrior& prior, const Vec& z_t, int t, const Condition& cond,
                  const NoiseSchedule& sched);

/// Same, given an already-conditioned clean mixture (batch fast path).
Vec predict_noise_conditioned(const GmmPrior& conditioned, const Vec& z_t, int t,
                              const NoiseSchedule& sched);

/// Exact ancestral sample from the conditioned clean mixture.
Vec sample(const GmmPrior& prior, const Condition& cond, Rng& rng);
Vec sample(const GmmPrior& prior, const Condition& cond, uint64_t seed);

}  // namespace sdlab
