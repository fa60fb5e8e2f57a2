#include "sdlab/optimizer.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

#include "sdlab/metrics.hpp"

namespace sdlab {

namespace {

void fnv_bytes(uint64_t& h, const void* data, size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
}

void fnv_int(uint64_t& h, int v) { fnv_bytes(h, &v, sizeof v); }
void fnv_doubles(uint64_t& h, const double* v, size_t n) { fnv_bytes(h, v, n * sizeof(double)); }

std::string hex64(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace

void RunConfig::validate() const {
    if (steps < 1) throw std::invalid_argument("run.steps must be >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("run.lr must be > 0");
    if (!(t_min_frac > 0.0 && t_min_frac < t_max_frac && t_max_frac < 1.0))
        throw std::invalid_argument("run: need 0 < t_min_frac < t_max_frac < 1");
    if (particles < 1) throw std::invalid_argument("run.particles must be >= 1");
    if (text.empty()) throw std::invalid_argument("run.text label is required");
    if (finetune_period < 1) throw std::invalid_argument("run.finetune_period must be >= 1");
    if (guidance.variant == GuidanceVariant::NegSource && guidance.neg_label.empty())
        throw std::invalid_argument("guidance.neg_label is required for the neg-source variant");
    if (guidance.variant == GuidanceVariant::AnchorDsFinetune) {
        if (prior_kind != PriorKind::Learned)
            throw std::invalid_argument("anchords-finetune requires prior.kind = learned");
        if (particles != 1)
            throw std::invalid_argument("anchords-finetune requires particles = 1");
    }
    if (metric_every > 0 && particles < 2)
        throw std::invalid_argument("run.metric_every requires particles >= 2");
    if (!(guidance.gamma > 0.0)) throw std::invalid_argument("guidance.gamma must be > 0");
    if (!(guidance.omega >= 0.0)) throw std::invalid_argument("guidance.omega must be >= 0");
}

std::pair<int, int> timestep_bounds(const RunConfig& cfg, const NoiseSchedule& sched) {
    int T = sched.total_steps;
    int lo = std::max(1, static_cast<int>(std::llround(cfg.t_min_frac * T)));
    int hi = std::min(T, static_cast<int>(std::llround(cfg.t_max_frac * T)));
    if (lo > hi) throw std::invalid_argument("run: empty timestep range");
    return {lo, hi};
}

GuidanceResult optimizer_step(ParticleState& st, Experiment& exp, const NoisePredictor& pred,
                              int tau, Vec& grad_theta_out, int& t_out, int& view_out) {
    const RunConfig& cfg = exp.run;
    auto [t_lo, t_hi] = timestep_bounds(cfg, exp.sched);

    int view_idx = st.rng.uniform_int(0, static_cast<int>(exp.views.views.size()) - 1);
    int t = st.rng.uniform_int(t_lo, t_hi);
    Vec eps = st.rng.normal_vec(pred.dim());
    fnv_int(st.draw_hash, view_idx);
    fnv_int(st.draw_hash, t);
    fnv_doubles(st.draw_hash, eps.data(), eps.size());

    const View& view = exp.views.views[static_cast<size_t>(view_idx)];
    Vec z = render(st.theta, view);
    Vec image = encode(z, cfg.encode);
    Vec z_t = add_noise(z, t, eps, exp.sched);

    GuidanceResult res = compute_guidance(pred, z_t, t, cfg.text, image, cfg.guidance, eps, exp.sched);

    double ab = exp.sched.alpha_bar(t);
    Vec grad_theta = backproject_grad(scale(res.grad_z, std::sqrt(ab)), view);
    if (!all_finite(grad_theta))
        throw std::runtime_error("non-finite gradient at step " + std::to_string(tau));

    switch (cfg.optimizer) {
        case OptimKind::Sgd:
            axpy(-cfg.lr, grad_theta, st.theta);
            break;
        case OptimKind::Adam: {
            st.adam_steps += 1;
            double bc1 = 1.0 - std::pow(cfg.beta1, st.adam_steps);
            double bc2 = 1.0 - std::pow(cfg.beta2, st.adam_steps);
            for (size_t i = 0; i < st.theta.size(); ++i) {
                double g = grad_theta[i];
                st.adam_m[i] = cfg.beta1 * st.adam_m[i] + (1.0 - cfg.beta1) * g;
                st.adam_v[i] = cfg.beta2 * st.adam_v[i] + (1.0 - cfg.beta2) * g * g;
                st.theta[i] -= cfg.lr * (st.adam_m[i] / bc1) / (std::sqrt(st.adam_v[i] / bc2) + cfg.adam_eps);
            }
            break;
        }
    }

    // fine-tuning hook: on filter rejection or every K steps
    if (cfg.guidance.variant == GuidanceVariant::AnchorDsFinetune &&
        cfg.prior_kind == PriorKind::Learned && exp.denoiser &&
        (res.filter_mask == 0 || tau % cfg.finetune_period == 0)) {
        finetune_adapter_step(*exp.denoiser, z_t, t, image, exp.sched, cfg.finetune_lr);
    }

    grad_theta_out = std::move(grad_theta);
    t_out = t;
    view_out = view_idx;
    return res;
}

Trajectory run_experiment(Experiment& exp) {
    exp.run.validate();
    exp.prior.validate();
    if (exp.views.views.empty()) throw std::invalid_argument("experiment has no views");
    const RunConfig& cfg = exp.run;

    std::unique_ptr<NoisePredictor> pred;
    if (cfg.prior_kind == PriorKind::Analytic) {
        pred = std::make_unique<AnalyticPredictor>(exp.prior, exp.sched);
    } else {
        if (!exp.denoiser) throw std::invalid_argument("learned prior selected but no denoiser loaded");
        pred = std::make_unique<LearnedPredictor>(*exp.denoiser);
    }

    int P = cfg.particles;
    int world_dim = exp.views.views[0].world_dim;
    std::vector<ParticleState> states(static_cast<size_t>(P));
    for (int p = 0; p < P; ++p) {
        auto& st = states[static_cast<size_t>(p)];
        st.rng = Rng(mix_seed(cfg.seed, static_cast<uint64_t>(p)));
        st.adam_m.assign(static_cast<size_t>(world_dim), 0.0);
        st.adam_v.assign(static_cast<size_t>(world_dim), 0.0);
        switch (cfg.init.kind) {
            case InitSpec::Kind::Zeros:
                st.theta.assign(static_cast<size_t>(world_dim), 0.0);
                break;
            case InitSpec::Kind::Gauss:
                st.theta = scale(st.rng.normal_vec(world_dim), cfg.init.scale);
                break;
            case InitSpec::Kind::Explicit:
                if (static_cast<int>(cfg.init.value.size()) != world_dim)
                    throw std::invalid_argument("run.init.value has wrong dimension");
                st.theta = cfg.init.value;
                break;
        }
    }

    std::unique_ptr<SourceTargetMetric> metric;
    if (cfg.metric_every > 0)
        metric = std::make_unique<SourceTargetMetric>(exp.prior, cfg.text, cfg.metric_seed,
                                                      cfg.metric_target_samples);

    Trajectory traj;
    traj.records.reserve(static_cast<size_t>(cfg.steps));
    auto thetas = [&]() {
        std::vector<Vec> out(static_cast<size_t>(P));
        for (int p = 0; p < P; ++p) out[static_cast<size_t>(p)] = states[static_cast<size_t>(p)].theta;
        return out;
    };
    if (metric) traj.metric_series.emplace_back(0, metric->evaluate(thetas()));

    std::vector<Vec> grads(static_cast<size_t>(P));
    std::vector<GuidanceResult> results(static_cast<size_t>(P));
    std::vector<int> ts(static_cast<size_t>(P)), views_drawn(static_cast<size_t>(P));
    std::vector<std::string> errors(static_cast<size_t>(P));

    for (int tau = 1; tau <= cfg.steps && !traj.aborted; ++tau) {
#pragma omp parallel for schedule(static) if (P > 1)
        for (int p = 0; p < P; ++p) {
            try {
                results[static_cast<size_t>(p)] =
                    optimizer_step(states[static_cast<size_t>(p)], exp, *pred, tau,
                                   grads[static_cast<size_t>(p)], ts[static_cast<size_t>(p)],
                                   views_drawn[static_cast<size_t>(p)]);
            } catch (const std::exception& e) {
                errors[static_cast<size_t>(p)] = e.what();
            }
        }
        for (int p = 0; p < P; ++p) {
            if (!errors[static_cast<size_t>(p)].empty()) {
                traj.aborted = true;
                traj.abort_reason = errors[static_cast<size_t>(p)];
            }
        }
        if (traj.aborted) break;

        StepRecord rec;
        rec.tau = tau;
        rec.t = ts[0];
        rec.view = views_drawn[0];
        rec.theta.assign(static_cast<size_t>(world_dim), 0.0);
        rec.grad_theta.assign(static_cast<size_t>(world_dim), 0.0);
        double m1n = 0.0, m2n = 0.0, rl = 0.0, fm = 0.0;
        for (int p = 0; p < P; ++p) {
            const auto& st = states[static_cast<size_t>(p)];
            const auto& r = results[static_cast<size_t>(p)];
            axpy(1.0 / P, st.theta, rec.theta);
            axpy(1.0 / P, grads[static_cast<size_t>(p)], rec.grad_theta);
            m1n += norm(r.m1);
            m2n += norm(r.m2);
            rl += r.rec_loss;
            fm += r.filter_mask;
        }
        rec.m1_norm = m1n / P;
        rec.m2_norm = m2n / P;
        rec.rec_loss = rl / P;
        rec.filter_mask = fm / P;
        rec.grad_norm = norm(rec.grad_theta);
        if (metric && tau % cfg.metric_every == 0) {
            rec.src_tgt = metric->evaluate(thetas());
            traj.metric_series.emplace_back(tau, rec.src_tgt);
        }
        traj.records.push_back(std::move(rec));
    }

    traj.final_thetas = thetas();
    uint64_t combined = 14695981039346656037ull;
    for (const auto& st : states) fnv_bytes(combined, &st.draw_hash, sizeof st.draw_hash);
    traj.stream_hash = hex64(combined);
    return traj;
}

}  // namespace sdlab
