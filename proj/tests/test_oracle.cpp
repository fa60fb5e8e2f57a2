#include <doctest.h>

#include "helpers.hpp"
#include "sdlab/guidance.hpp"
#include "sdlab/oracle.hpp"
#include "sdlab/scene.hpp"
#include "sdlab/validate.hpp"

using namespace sdlab;

TEST_CASE("fd_gradient: quadratic loss and error cases") {
    Rng rng(21);
    Vec a = rng.normal_vec(5), theta = rng.normal_vec(5);
    auto loss = [&](const Vec& x) { return 0.5 * squared_distance(x, a); };
    Vec g = oracle::fd_gradient(loss, theta, 1e-6);
    CHECK(max_abs_diff(g, sub(theta, a)) < 1e-8);
    CHECK_THROWS_AS(oracle::fd_gradient(loss, theta, 0.0), std::invalid_argument);
}

TEST_CASE("fd_gradient matches the backprojection path through the linear render chain") {
    Rng rng(22);
    NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    ViewSet vs = make_views(4, 2, 3, 77);
    for (int rep = 0; rep < 10; ++rep) {
        const View& view = vs.views[static_cast<size_t>(rep % 3)];
        Vec theta = rng.normal_vec(4);
        Vec r = rng.normal_vec(2);  // frozen residual
        int t = rng.uniform_int(1, 1000);
        Vec eps = rng.normal_vec(2);
        auto loss = [&](const Vec& th) { return dot(r, add_noise(render(th, view), t, eps, s)); };
        Vec fd = oracle::fd_gradient(loss, theta, 1e-6);
        Vec path = backproject_grad(scale(r, std::sqrt(s.alpha_bar(t))), view);
        CHECK(norm(sub(fd, path)) / std::max(norm(path), 1e-12) < 1e-5);
    }
}

TEST_CASE("numeric_score halving h roughly quarters the error") {
    NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    GmmPrior p = testing::bimodal_prior();
    Vec zt{0.4, -0.2};
    int t = 300;
    Vec exact = predict_noise(p, zt, t, Condition::null(), s);
    double h = 1e-3;
    double e1 = max_abs_diff(oracle::numeric_score(p, zt, t, Condition::null(), s, h), exact);
    double e2 = max_abs_diff(oracle::numeric_score(p, zt, t, Condition::null(), s, h / 2), exact);
    double ratio = e1 / e2;
    CHECK(ratio > 2.5);  // second-order central differences
    CHECK(ratio < 6.0);
}

TEST_CASE("posterior mean of a point mass is the mass point") {
    GmmPrior p = testing::point_mass_prior({3.0, -1.0});
    NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    Rng rng(23);
    for (int rep = 0; rep < 10; ++rep) {
        Vec zt = scale(rng.normal_vec(2), 3.0);
        int t = rng.uniform_int(1, 1000);
        CHECK(max_abs_diff(oracle::posterior_mean(p, zt, t, Condition::null(), s), {3.0, -1.0}) < 1e-12);
    }
}

TEST_CASE("posterior mean approaches z_t in the no-noise limit") {
    GmmPrior p = testing::single_gaussian_prior({0.2, 0.4}, 0.5);
    NoiseSchedule s = testing::fixed_abar({1.0 - 1e-9});
    Vec zt{0.3, 0.1};
    CHECK(max_abs_diff(oracle::posterior_mean(p, zt, 1, Condition::null(), s), zt) < 1e-4);
}

TEST_CASE("Tweedie identity: pseudo-reconstruction equals the posterior mean") {
    NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    Rng rng(24);
    for (int rep = 0; rep < 60; ++rep) {
        GmmPrior p = random_mixture(rng);
        Condition cond = random_condition(rng, p, false);
        if (rep % 3 == 0) {  // image-conditioned cases across the rho grid
            p.image_bandwidth = (rep % 9 == 0) ? 1.0 : (rep % 9 == 3) ? 0.1 : 0.01;
            cond.image = scale(rng.normal_vec(p.dim), 2.0);
        }
        int t = rng.uniform_int(1, 1000);
        Vec zt = scale(rng.normal_vec(p.dim), 1.5);
        Vec recon = pseudo_reconstruct(zt, predict_noise(p, zt, t, cond, s), t, s);
        CHECK(max_abs_diff(recon, oracle::posterior_mean(p, zt, t, cond, s)) < 1e-8);
    }
}

TEST_CASE("numeric_score rejects bad step sizes") {
    GmmPrior p = testing::bimodal_prior();
    NoiseSchedule s = make_schedule(100, 1e-4, 0.02);
    CHECK_THROWS_AS(oracle::numeric_score(p, {0.0, 0.0}, 1, Condition::null(), s, 0.0),
                    std::invalid_argument);
}
