#include "sdlab/prior.hpp"

#include <algorithm>
#include <cmath>

namespace sdlab {

void GmmPrior::validate() const {
    if (dim < 1) throw std::invalid_argument("prior: dim must be >= 1");
    if (components.empty()) throw std::invalid_argument("prior: needs at least one component");
    double wsum = 0.0;
    for (size_t k = 0; k < components.size(); ++k) {
        const auto& c = components[k];
        if (!(c.weight > 0.0))
            throw std::invalid_argument("prior: component " + std::to_string(k) + " weight must be > 0");
        if (c.variance < 0.0)
            throw std::invalid_argument("prior: component " + std::to_string(k) + " variance must be >= 0");
        if (static_cast<int>(c.mean.size()) != dim)
            throw std::invalid_argument("prior: component " + std::to_string(k) + " mean has wrong dimension");
        wsum += c.weight;
    }
    if (std::fabs(wsum - 1.0) > 1e-9)
        throw std::invalid_argument("prior: component weights must sum to 1 (got " + std::to_string(wsum) + ")");
    for (const auto& [label, idx] : text_map) {
        if (idx.empty()) throw std::invalid_argument("prior: text label '" + label + "' maps to empty subset");
        for (int i : idx)
            if (i < 0 || i >= static_cast<int>(components.size()))
                throw std::invalid_argument("prior: text label '" + label + "' references component " +
                                            std::to_string(i) + " out of range");
    }
    if (!(image_bandwidth > 0.0)) throw std::invalid_argument("prior: image_bandwidth must be > 0");
}

const std::vector<int>& GmmPrior::subset(const std::string& label) const {
    auto it = text_map.find(label);
    if (it == text_map.end()) throw std::invalid_argument("prior: unknown text label '" + label + "'");
    return it->second;
}

namespace {

std::vector<int> selected_indices(const GmmPrior& prior, const Condition& cond) {
    std::vector<int> idx;
    switch (cond.kind) {
        case TextCond::Null:
            idx.resize(prior.components.size());
            for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
            break;
        case TextCond::Label: idx = prior.subset(cond.label); break;
        case TextCond::NegLabel: {
            const auto& in = prior.subset(cond.label);
            for (int i = 0; i < static_cast<int>(prior.components.size()); ++i)
                if (std::find(in.begin(), in.end(), i) == in.end()) idx.push_back(i);
            if (idx.empty())
                throw std::invalid_argument("prior: negative label '" + cond.label + "' has empty complement");
            break;
        }
    }
    return idx;
}

void renormalize_log_weights(std::vector<double>& logw, std::vector<GmmComponent>& comps) {
    double mx = *std::max_element(logw.begin(), logw.end());
    double sum = 0.0;
    for (double lw : logw) sum += std::exp(lw - mx);
    double logz = mx + std::log(sum);
    for (size_t k = 0; k < comps.size(); ++k) comps[k].weight = std::exp(logw[k] - logz);
}

}  // namespace

GmmPrior conditioned_mixture(const GmmPrior& prior, const Condition& cond) {
    prior.validate();
    auto idx = selected_indices(prior, cond);

    GmmPrior out;
    out.dim = prior.dim;
    out.image_bandwidth = prior.image_bandwidth;
    out.components.reserve(idx.size());
    std::vector<double> logw;
    logw.reserve(idx.size());
    for (int i : idx) {
        out.components.push_back(prior.components[static_cast<size_t>(i)]);
        logw.push_back(std::log(prior.components[static_cast<size_t>(i)].weight));
    }

    if (cond.image) {
        const Vec& img = *cond.image;
        if (static_cast<int>(img.size()) != prior.dim)
            throw std::invalid_argument("condition image has wrong dimension");
        double rho2 = prior.image_bandwidth * prior.image_bandwidth;
        for (size_t k = 0; k < out.components.size(); ++k) {
            auto& c = out.components[k];
            double denom = c.variance + rho2;
            // evidence N(img; mu, (v + rho^2) I), constants dropped (renormalized below)
            logw[k] += -0.5 * squared_distance(img, c.mean) / denom -
                       0.5 * static_cast<double>(prior.dim) * std::log(denom);
            Vec new_mean(c.mean.size());
            for (size_t i = 0; i < new_mean.size(); ++i)
                new_mean[i] = (rho2 * c.mean[i] + c.variance * img[i]) / denom;
            c.mean = std::move(new_mean);
            c.variance = c.variance * rho2 / denom;
        }
    }

    renormalize_log_weights(logw, out.components);
    return out;
}

GmmPrior noised_mixture(const GmmPrior& prior, int t, const Condition& cond, const NoiseSchedule& sched) {
    GmmPrior out = conditioned_mixture(prior, cond);
    double ab = sched.alpha_bar(t);
    double c0 = std::sqrt(ab);
    for (auto& c : out.components) {
        for (auto& m : c.mean) m *= c0;
        c.variance = ab * c.variance + (1.0 - ab);
    }
    return out;
}

Vec predict_noise_conditioned(const GmmPrior& conditioned, const Vec& z_t, int t,
                              const NoiseSchedule& sched) {
    if (static_cast<int>(z_t.size()) != conditioned.dim)
        throw std::invalid_argument("predict_noise: z_t has wrong dimension");
    double ab = sched.alpha_bar(t);
    double c0 = std::sqrt(ab);
    double sigma = std::sqrt(1.0 - ab);
    size_t K = conditioned.components.size();
    int d = conditioned.dim;

    // responsibilities of the noised components, in log domain
    std::vector<double> logr(K);
    std::vector<double> s2(K);
    for (size_t k = 0; k < K; ++k) {
        const auto& c = conditioned.components[k];
        s2[k] = ab * c.variance + (1.0 - ab);
        if (!(s2[k] > 0.0)) throw std::runtime_error("predict_noise: degenerate noised variance");
        double q = 0.0;
        for (int i = 0; i < d; ++i) {
            double diff = z_t[static_cast<size_t>(i)] - c0 * c.mean[static_cast<size_t>(i)];
            q += diff * diff;
        }
        logr[k] = std::log(c.weight) - 0.5 * q / s2[k] - 0.5 * d * std::log(s2[k]);
    }
    double mx = *std::max_element(logr.begin(), logr.end());
    double sum = 0.0;
    for (double lr : logr) sum += std::exp(lr - mx);

    Vec eps(static_cast<size_t>(d), 0.0);
    for (size_t k = 0; k < K; ++k) {
        double r = std::exp(logr[k] - mx) / sum;
        const auto& c = conditioned.components[k];
        double coef = r / s2[k];
        for (int i = 0; i < d; ++i)
            eps[static_cast<size_t>(i)] +=
                coef * (z_t[static_cast<size_t>(i)] - c0 * c.mean[static_cast<size_t>(i)]);
    }
    for (auto& e : eps) e *= sigma;
    return eps;
}

Vec predict_noise(const GmmPrior& prior, const Vec& z_t, int t, const Condition& cond,
                  const NoiseSchedule& sched) {
    GmmPrior conditioned = conditioned_mixture(prior, cond);
    return predict_noise_conditioned(conditioned, z_t, t, sched);
}

Vec sample(const GmmPrior& prior, const Condition& cond, Rng& rng) {
    GmmPrior conditioned = conditioned_mixture(prior, cond);
    double u = rng.uniform();
    double acc = 0.0;
    size_t pick = conditioned.components.size() - 1;
    for (size_t k = 0; k < conditioned.components.size(); ++k) {
        acc += conditioned.components[k].weight;
        if (u < acc) {
            pick = k;
            break;
        }
    }
    const auto& c = conditioned.components[pick];
    Vec z = c.mean;
    if (c.variance > 0.0) {
        double sd = std::sqrt(c.variance);
        for (auto& x : z) x += sd * rng.normal();
    }
    return z;
}

Vec sample(const GmmPrior& prior, const Condition& cond, uint64_t seed) {
    Rng rng(seed);
    return sample(prior, cond, rng);
}

}  // namespace sdlab
