#include "sdlab/validate.hpp"

#include <cmath>
#include <cstdio>

#include "sdlab/guidance.hpp"
#include "sdlab/kernels.hpp"
#include "sdlab/metrics.hpp"
#include "sdlab/oracle.hpp"
#include "sdlab/scene.hpp"

namespace sdlab {

GmmPrior random_mixture(Rng& rng, int max_dim, int max_components) {
    GmmPrior p;
    p.dim = rng.uniform_int(1, max_dim);
    int K = rng.uniform_int(1, max_components);
    Vec w(static_cast<size_t>(K));
    double wsum = 0.0;
    for (auto& x : w) {
        x = 0.1 + rng.uniform();
        wsum += x;
    }
    for (int k = 0; k < K; ++k) {
        GmmComponent c;
        c.weight = w[static_cast<size_t>(k)] / wsum;
        c.mean = scale(rng.normal_vec(p.dim), 2.0);
        c.variance = 0.02 + rng.uniform();
        p.components.push_back(std::move(c));
    }
    std::vector<int> subset;
    if (K == 1) {
        subset = {0};
    } else {
        int take = rng.uniform_int(1, K - 1);  // proper subset so negatives stay valid
        for (int k = 0; k < K && static_cast<int>(subset.size()) < take; ++k)
            if (rng.uniform() < 0.5 || K - k <= take - static_cast<int>(subset.size())) subset.push_back(k);
    }
    p.text_map["a"] = subset;
    p.image_bandwidth = 0.05 + rng.uniform() * 0.5;
    return p;
}

Condition random_condition(Rng& rng, const GmmPrior& prior, bool allow_image) {
    Condition c;
    double u = rng.uniform();
    if (u < 0.4) {
        c = Condition::null();
    } else if (u < 0.8 || prior.components.size() < 2) {
        c = Condition::text("a");
    } else {
        c = Condition::negative("a");
    }
    if (allow_image && rng.uniform() < 0.5) c.image = scale(rng.normal_vec(prior.dim), 2.0);
    return c;
}

namespace {

std::string fmt_short(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

struct Suite {
    std::vector<CheckResult> results;
    void check(const std::string& name, double tol, double observed, const std::string& detail = "") {
        results.push_back({name, tol, observed, observed <= tol, detail});
    }
    void check_flag(const std::string& name, bool pass, const std::string& detail = "") {
        results.push_back({name, 0.0, pass ? 0.0 : 1.0, pass, detail});
    }
};

}  // namespace

std::vector<CheckResult> run_validation(const ValidateOptions& opts) {
    Suite suite;
    NoiseSchedule sched = make_schedule(1000, 1e-4, 0.02);

    {  // cumulative-product definition, recomputed in long double
        long double prod = 1.0L;
        double worst = 0.0;
        for (int t = 1; t <= sched.total_steps; ++t) {
            prod *= 1.0L - static_cast<long double>(sched.beta(t));
            worst = std::max(worst, std::fabs(static_cast<double>(
                                        (static_cast<long double>(sched.alpha_bar(t)) - prod) / prod)));
        }
        suite.check("schedule.alpha_bar_cumprod", 1e-12, worst);
    }
    {
        double worst = 0.0;
        for (int t = 1; t <= sched.total_steps; ++t) {
            double e = eta(t, sched);
            worst = std::max(worst, std::fabs(e * e * (1.0 - sched.alpha_bar(t)) - sched.alpha_bar(t)));
        }
        suite.check("schedule.eta_identity", 1e-12, worst);
    }
    {
        Rng rng(101);
        double worst = 0.0;
        for (int i = 0; i < 200; ++i) {
            int t = rng.uniform_int(1, sched.total_steps);
            Vec z = rng.normal_vec(3), eps = rng.normal_vec(3);
            Vec zt = add_noise(z, t, eps, sched);
            Vec back = pseudo_reconstruct(zt, eps, t, sched);
            worst = std::max(worst, max_abs_diff(back, z));
        }
        suite.check("schedule.noising_round_trip", 1e-10, worst);
    }
    {  // reconstruction identity for m1; the sign that holds is documented
        Rng rng(202);
        double worst_exact = 0.0, worst_printed = 0.0;
        for (int i = 0; i < 2000; ++i) {
            int t = rng.uniform_int(1, sched.total_steps);
            Vec zt = rng.normal_vec(2), ec = rng.normal_vec(2), eu = rng.normal_vec(2);
            double e = eta(t, sched) * opts.eta_scale;
            Vec zc = pseudo_reconstruct(zt, ec, t, sched);
            Vec zu = pseudo_reconstruct(zt, eu, t, sched);
            Vec m1 = sub(ec, eu);
            worst_exact = std::max(worst_exact, max_abs_diff(m1, scale(sub(zu, zc), e)));
            worst_printed = std::max(worst_printed, max_abs_diff(m1, scale(sub(zc, zu), e)));
        }
        suite.check("guidance.m1_reconstruction_identity", 1e-10, worst_exact,
                    "holds as m1 = eta*(zhat_source - zhat_target); with the printed sign "
                    "m1 = eta*(zhat_target - zhat_source) the residual is " +
                        fmt_short(worst_printed));
    }
    {  // CFG residual reconstruction coefficient
        Rng rng(303);
        std::string detail;
        double worst_plus = 0.0;
        for (double omega : {0.0, 1.0, 7.5, 100.0}) {
            double wp = 0.0, wm = 0.0;
            for (int i = 0; i < 500; ++i) {
                Vec ec = rng.normal_vec(2), eu = rng.normal_vec(2), eps = rng.normal_vec(2);
                Vec direct = sub(cfg_combine(ec, eu, omega), eps);
                auto [m1, m2] = decompose(ec, eu, eps);
                wp = std::max(wp, max_abs_diff(direct, residual_from_terms(m1, m2, omega + 1.0)));
                wm = std::max(wm, max_abs_diff(direct, residual_from_terms(m1, m2, omega - 1.0)));
            }
            worst_plus = std::max(worst_plus, wp);
            detail += "omega=" + fmt_short(omega) + ": (omega+1) err " + fmt_short(wp) +
                      ", (omega-1) err " + fmt_short(wm) + "; ";
        }
        suite.check("guidance.cfg_coefficient_identity", 1e-10, worst_plus,
                    "exact with coefficient (omega + 1); " + detail);
    }
    {  // score vs finite-difference oracle
        Rng rng(404);
        double worst = 0.0;
        for (int i = 0; i < 60; ++i) {
            GmmPrior prior = random_mixture(rng);
            Condition cond = random_condition(rng, prior);
            int t = rng.uniform_int(1, sched.total_steps);
            Vec zt = scale(rng.normal_vec(prior.dim), 1.5);
            Vec fast = predict_noise(prior, zt, t, cond, sched);
            Vec slow = oracle::numeric_score(prior, zt, t, cond, sched, 1e-5);
            worst = std::max(worst, norm(sub(fast, slow)) / std::max(norm(slow), 1e-9));
        }
        suite.check("prior.score_matches_numeric_oracle", 1e-5, worst);
    }
    {  // point-mass prior inverts the injected noise
        Rng rng(505);
        double worst = 0.0;
        for (int i = 0; i < 100; ++i) {
            GmmPrior p;
            p.dim = 2;
            p.components.push_back({1.0, rng.normal_vec(2), 0.0});
            int t = rng.uniform_int(1, sched.total_steps);
            Vec z = p.components[0].mean, eps = rng.normal_vec(2);
            Vec zt = add_noise(z, t, eps, sched);
            worst = std::max(worst, max_abs_diff(predict_noise(p, zt, t, Condition::null(), sched), eps));
        }
        suite.check("prior.point_mass_noise_recovery", 1e-8, worst);
    }
    {  // single-Gaussian closed form
        Rng rng(606);
        double worst = 0.0;
        for (int i = 0; i < 100; ++i) {
            GmmPrior p;
            p.dim = 3;
            double v = 0.05 + rng.uniform();
            p.components.push_back({1.0, rng.normal_vec(3), v});
            int t = rng.uniform_int(1, sched.total_steps);
            Vec zt = rng.normal_vec(3);
            double ab = sched.alpha_bar(t);
            Vec expect(3);
            for (int k = 0; k < 3; ++k)
                expect[static_cast<size_t>(k)] = std::sqrt(1.0 - ab) *
                                                 (zt[static_cast<size_t>(k)] - std::sqrt(ab) * p.components[0].mean[static_cast<size_t>(k)]) /
                                                 (ab * v + 1.0 - ab);
            worst = std::max(worst, max_abs_diff(predict_noise(p, zt, t, Condition::null(), sched), expect));
        }
        suite.check("prior.single_gaussian_closed_form", 1e-12, worst);
    }
    {  // label over all components equals the unconditional prediction
        Rng rng(707);
        GmmPrior prior = random_mixture(rng, 3, 4);
        std::vector<int> all(prior.components.size());
        for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
        prior.text_map["all"] = all;
        double worst = 0.0;
        for (int i = 0; i < 100; ++i) {
            int t = rng.uniform_int(1, sched.total_steps);
            Vec zt = rng.normal_vec(prior.dim);
            worst = std::max(worst, max_abs_diff(predict_noise(prior, zt, t, Condition::text("all"), sched),
                                                 predict_noise(prior, zt, t, Condition::null(), sched)));
        }
        suite.check("prior.full_label_equals_unconditional", 1e-12, worst);
    }
    {  // image kernel concentrates weight on the nearest component
        GmmPrior p;
        p.dim = 2;
        p.components.push_back({0.5, {2.0, 0.0}, 0.1});
        p.components.push_back({0.5, {-2.0, 0.0}, 0.1});
        p.image_bandwidth = 0.01 * 4.0;  // 0.01 * ||mu1 - mu2||
        GmmPrior c = conditioned_mixture(p, Condition::null().with_image(Vec{2.0, 0.0}));
        suite.check("prior.image_weight_concentration", 1e-3, 1.0 - c.components[0].weight,
                    "weight on the anchored component = " + fmt_short(c.components[0].weight));
    }
    {  // Tweedie: pseudo-reconstruction equals the exact posterior mean
        Rng rng(808);
        double worst = 0.0;
        for (int i = 0; i < 100; ++i) {
            GmmPrior prior = random_mixture(rng);
            Condition cond = random_condition(rng, prior);
            int t = rng.uniform_int(1, sched.total_steps);
            Vec zt = scale(rng.normal_vec(prior.dim), 1.5);
            Vec recon = pseudo_reconstruct(zt, predict_noise(prior, zt, t, cond, sched), t, sched);
            worst = std::max(worst, max_abs_diff(recon, oracle::posterior_mean(prior, zt, t, cond, sched)));
        }
        suite.check("tweedie.pseudo_reconstruct_equals_posterior_mean", 1e-8, worst);
    }
    {  // filter gate semantics around gamma
        bool ok = filter_mask(0.05, 0.03) == 0 && filter_mask(0.01, 0.03) == 1 &&
                  filter_mask(0.03, 0.03) == 0;
        suite.check_flag("guidance.filter_threshold_semantics", ok,
                         "mask(0.05)=0, mask(0.01)=1, mask(gamma)=0 under strict <");
    }
    {  // render/backproject adjoint
        Rng rng(909);
        double worst = 0.0;
        for (int i = 0; i < 50; ++i) {
            int wd = rng.uniform_int(2, 6);
            int d = rng.uniform_int(1, wd);
            ViewSet vs = make_views(wd, d, 3, rng.next_u64());
            for (const auto& v : vs.views) {
                Vec theta = rng.normal_vec(wd), g = rng.normal_vec(d);
                worst = std::max(worst, std::fabs(dot(render(theta, v), g) -
                                                  dot(theta, backproject_grad(g, v))));
            }
        }
        suite.check("scene.render_adjoint", 1e-10, worst);
    }
    {  // finite differences on a quadratic
        Rng rng(1010);
        Vec a = rng.normal_vec(4), theta = rng.normal_vec(4);
        auto loss = [&](const Vec& x) { return 0.5 * squared_distance(x, a); };
        Vec g = oracle::fd_gradient(loss, theta, 1e-6);
        suite.check("oracle.fd_gradient_quadratic", 1e-8, max_abs_diff(g, sub(theta, a)));
    }
    {  // energy distance: identical sets, symmetry, serial vs parallel kernels
        Rng rng(1111);
        int n = 80, m = 120, d = 2;
        std::vector<double> x, y;
        for (int i = 0; i < n * d; ++i) x.push_back(rng.normal());
        for (int i = 0; i < m * d; ++i) y.push_back(rng.normal() + 0.5);
        double self_dist = kernels::energy_distance(x, n, x, n, d, false);
        suite.check("metrics.energy_distance_identical_sets", 1e-12, std::fabs(self_dist));
        double xy = kernels::energy_distance(x, n, y, m, d, false);
        double yx = kernels::energy_distance(y, m, x, n, d, false);
        suite.check("metrics.energy_distance_symmetry", 1e-13, std::fabs(xy - yx));
        double par = kernels::energy_distance(x, n, y, m, d, true);
        suite.check("kernels.serial_parallel_agreement", 1e-12,
                    std::fabs(par - xy) / std::max(std::fabs(xy), 1e-12));
    }

    return suite.results;
}

nlohmann::json validation_report(const std::vector<CheckResult>& checks) {
    nlohmann::json report;
    auto arr = nlohmann::json::array();
    int failed = 0;
    for (const auto& c : checks) {
        nlohmann::json j{{"name", c.name},
                         {"tolerance", c.tolerance},
                         {"observed", c.observed},
                         {"pass", c.pass}};
        if (!c.detail.empty()) j["detail"] = c.detail;
        arr.push_back(std::move(j));
        failed += c.pass ? 0 : 1;
    }
    report["checks"] = arr;
    report["total"] = checks.size();
    report["failed"] = failed;
    report["pass"] = failed == 0;
    return report;
}

}  // namespace sdlab
