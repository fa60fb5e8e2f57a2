// Acceptance suite: one test case per criterion, each printing a pass/fail
// line with the measured quantities and its runtime.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include <json.hpp>

#include "helpers.hpp"
#include "sdlab/config.hpp"
#include "sdlab/io.hpp"
#include "sdlab/metrics.hpp"
#include "sdlab/oracle.hpp"
#include "sdlab/validate.hpp"

namespace fs = std::filesystem;
using namespace sdlab;
using nlohmann::json;

namespace {

const std::string kBin = SDLAB_BIN;

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

void report(const char* id, bool pass, double seconds, const std::string& detail) {
    std::printf("[%s] %s %s (%.2fs)\n", id, pass ? "PASS" : "FAIL", detail.c_str(), seconds);
    std::fflush(stdout);
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

Experiment bimodal_experiment(GuidanceVariant variant, uint64_t seed) {
    Experiment exp;
    exp.sched = make_schedule(1000, 1e-4, 0.02);
    exp.prior = testing::bimodal_prior();
    exp.views = make_views(2, 2, 1, 0);
    exp.run = testing::base_run("both", 2000);
    exp.run.seed = seed;
    exp.run.guidance.variant = variant;
    exp.run.guidance.omega = default_omega(variant);
    exp.run.guidance.target_cfg = true;
    return exp;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("A1 algebraic identities") {
    Timer timer;
    NoiseSchedule sched = make_schedule(1000, 1e-4, 0.02);
    Rng rng(1001);

    // reconstruction identity for m1 across 10^4 instances x 10 timesteps
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        Vec zt = rng.normal_vec(3), ec = rng.normal_vec(3), eu = rng.normal_vec(3);
        for (int k = 0; k < 10; ++k) {
            int t = 1 + k * 111;
            Vec m1 = sub(ec, eu);
            Vec zc = pseudo_reconstruct(zt, ec, t, sched);
            Vec zu = pseudo_reconstruct(zt, eu, t, sched);
            worst = std::max(worst, max_abs_diff(m1, scale(sub(zu, zc), eta(t, sched))));
        }
    }
    bool identity_ok = worst <= 1e-10;

    // CFG residual reconstruction: measure which coefficient is machine-exact
    double worst_plus = 0.0, min_printed = 1e300;
    for (double omega : {0.0, 1.0, 7.5, 100.0}) {
        for (int i = 0; i < 500; ++i) {
            Vec ec = rng.normal_vec(3), eu = rng.normal_vec(3), eps = rng.normal_vec(3);
            Vec direct = sub(cfg_combine(ec, eu, omega), eps);
            auto [m1, m2] = decompose(ec, eu, eps);
            worst_plus = std::max(worst_plus, max_abs_diff(direct, residual_from_terms(m1, m2, omega + 1.0)));
            double printed = max_abs_diff(direct, residual_from_terms(m1, m2, omega - 1.0));
            double m1n = max_abs_diff(m1, Vec(3, 0.0));
            if (m1n > 0.5) min_printed = std::min(min_printed, printed / m1n);
        }
    }
    bool coeff_ok = worst_plus <= 1e-10 && min_printed > 1.0;  // (omega-1) misses by 2*|m1|

    double secs = timer.seconds();
    bool pass = identity_ok && coeff_ok && secs < 5.0;
    report("A1", pass, secs,
           "m1 = eta*(zhat_source - zhat_target) max err " + fmt(worst) +
               "; CFG residual exact with (omega+1), err " + fmt(worst_plus) +
               ", printed (omega-1) off by >= " + fmt(min_printed) + "*|m1|");
    CHECK(identity_ok);
    CHECK(coeff_ok);
    CHECK(secs < 5.0);
}

TEST_CASE("A2 score exactness against the numeric oracle") {
    Timer timer;
    NoiseSchedule sched = make_schedule(1000, 1e-4, 0.02);
    Rng rng(1002);
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
        GmmPrior prior = random_mixture(rng, 4, 5);
        Condition cond = random_condition(rng, prior);
        int t = rng.uniform_int(1, 1000);
        Vec zt = scale(rng.normal_vec(prior.dim), 1.5);
        Vec fast = predict_noise(prior, zt, t, cond, sched);
        Vec slow = oracle::numeric_score(prior, zt, t, cond, sched, 1e-5);
        worst = std::max(worst, norm(sub(fast, slow)) / std::max(norm(slow), 1e-9));
    }
    double secs = timer.seconds();
    bool pass = worst <= 1e-5 && secs < 30.0;
    report("A2", pass, secs, "200 instances, worst relative error " + fmt(worst));
    CHECK(worst <= 1e-5);
    CHECK(secs < 30.0);
}

TEST_CASE("A3 Tweedie posterior agreement") {
    Timer timer;
    NoiseSchedule sched = make_schedule(1000, 1e-4, 0.02);
    Rng rng(1003);
    const double rhos[3] = {1.0, 0.1, 0.01};
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
        GmmPrior prior = random_mixture(rng, 4, 5);
        Condition cond = random_condition(rng, prior, false);
        if (i % 2 == 0) {  // half the cases are image-conditioned across the rho grid
            prior.image_bandwidth = rhos[(i / 2) % 3];
            cond.image = scale(rng.normal_vec(prior.dim), 2.0);
        }
        int t = rng.uniform_int(1, 1000);
        Vec zt = scale(rng.normal_vec(prior.dim), 1.5);
        Vec recon = pseudo_reconstruct(zt, predict_noise(prior, zt, t, cond, sched), t, sched);
        worst = std::max(worst, max_abs_diff(recon, oracle::posterior_mean(prior, zt, t, cond, sched)));
    }
    double secs = timer.seconds();
    bool pass = worst <= 1e-8 && secs < 30.0;
    report("A3", pass, secs, "200 instances incl. rho {1, 0.1, 0.01}, worst abs err " + fmt(worst));
    CHECK(worst <= 1e-8);
    CHECK(secs < 30.0);
}

TEST_CASE("A4 anchoring beats the static source on the bimodal config") {
    Timer timer;
    const int n_seeds = 50;
    int wins = 0;
    double coh_anchor = 0.0, coh_vanilla = 0.0;
    for (uint64_t seed = 0; seed < n_seeds; ++seed) {
        Experiment van = bimodal_experiment(GuidanceVariant::VanillaSds, seed);
        Experiment anc = bimodal_experiment(GuidanceVariant::AnchorDs, seed);
        Trajectory tv = run_experiment(van);
        Trajectory ta = run_experiment(anc);
        REQUIRE_FALSE(tv.aborted);
        REQUIRE_FALSE(ta.aborted);
        REQUIRE(tv.stream_hash == ta.stream_hash);  // paired draws
        double dv = nearest_mode(tv.final_thetas[0], van.prior, "both").first;
        double da = nearest_mode(ta.final_thetas[0], anc.prior, "both").first;
        wins += da < dv;
        coh_vanilla += update_coherence(tv) / n_seeds;
        coh_anchor += update_coherence(ta) / n_seeds;
    }
    double secs = timer.seconds();
    bool pass = wins >= 40 && coh_anchor > coh_vanilla && secs < 600.0;
    report("A4", pass, secs,
           "anchords wins " + std::to_string(wins) + "/50; coherence " + fmt(coh_anchor) +
               " vs vanilla " + fmt(coh_vanilla));
    CHECK(wins >= 40);
    CHECK(coh_anchor > coh_vanilla);
    CHECK(secs < 600.0);  // < 5 min per variant
}

TEST_CASE("A5 static negative source is brittle") {
    Timer timer;
    const int n_seeds = 50;
    auto neg_experiment = [&](const std::string& neg_label, uint64_t seed) {
        Experiment exp;
        exp.sched = make_schedule(1000, 1e-4, 0.02);
        exp.prior = testing::bimodal_prior();
        exp.views = make_views(2, 2, 1, 0);
        exp.run = testing::base_run("plus", 2000);
        exp.run.seed = seed;
        exp.run.guidance.variant = GuidanceVariant::NegSource;
        exp.run.guidance.neg_label = neg_label;
        exp.run.guidance.target_cfg = false;
        exp.run.init.kind = InitSpec::Kind::Explicit;
        exp.run.init.value = {-1.0, 0.0};  // the asset starts in the minus basin
        return exp;
    };
    auto anchor_experiment = [&](uint64_t seed) {
        Experiment exp = neg_experiment("near_minus", seed);
        exp.run.guidance.variant = GuidanceVariant::AnchorDs;
        exp.run.guidance.neg_label.clear();
        return exp;
    };

    int reached = 0, wins = 0;
    for (uint64_t seed = 0; seed < n_seeds; ++seed) {
        // y_neg describing the mode the asset is in: guidance works
        Experiment correct = neg_experiment("near_minus", seed);
        Trajectory tc = run_experiment(correct);
        REQUIRE_FALSE(tc.aborted);
        reached += nearest_mode(tc.final_thetas[0], correct.prior, "plus").first < 0.5;

        // y_neg describing the wrong mode: worse than anchoring, pairwise
        Experiment wrong = neg_experiment("near_plus", seed);
        Experiment anchor = anchor_experiment(seed);
        Trajectory tw = run_experiment(wrong);
        Trajectory ta = run_experiment(anchor);
        REQUIRE_FALSE(tw.aborted);
        REQUIRE_FALSE(ta.aborted);
        REQUIRE(tw.stream_hash == ta.stream_hash);
        double dw = nearest_mode(tw.final_thetas[0], wrong.prior, "plus").first;
        double da = nearest_mode(ta.final_thetas[0], anchor.prior, "plus").first;
        wins += dw > da;
    }
    double secs = timer.seconds();
    bool pass = reached >= 40 && wins >= 40 && secs < 600.0;
    report("A5", pass, secs,
           "correct-negative reaches the text mode " + std::to_string(reached) +
               "/50; wrong-negative worse than anchords " + std::to_string(wins) + "/50");
    CHECK(reached >= 40);
    CHECK(wins >= 40);
    CHECK(secs < 600.0);
}

TEST_CASE("A6 adapter fine-tuning efficacy") {
    Timer timer;
    NoiseSchedule sched = make_schedule(1000, 1e-4, 0.02);
    GmmPrior prior = testing::single_gaussian_prior({0.5, -0.5}, 0.5);
    Denoiser model = make_denoiser(prior, sched, 12345);
    PretrainConfig pc;
    pc.steps = 12000;
    pc.batch = 64;
    pc.seed = 7;
    pretrain(model, prior, sched, pc);

    struct Tuple {
        Vec zt, image;
        int t;
    };
    std::vector<Tuple> batch;
    Rng rng(85);
    for (int i = 0; i < 256; ++i) {
        Vec image = sample(prior, Condition::null(), rng);
        image[0] += 0.2 * rng.normal();
        image[1] += 0.2 * rng.normal();
        int t = rng.uniform_int(500, 900);
        batch.push_back({add_noise(image, t, rng.normal_vec(2), sched), image, t});
    }
    auto mean_rec = [&](const Denoiser& d) {
        double acc = 0.0;
        for (const auto& b : batch) acc += rec_loss_learned(d, b.zt, b.t, b.image, sched);
        return acc / batch.size();
    };

    Denoiser perturbed = model;
    Rng prng(61);
    for (auto& w : perturbed.tensor("adapter.w2").data) w += 2.0 * prng.normal();
    Denoiser before = perturbed;
    double start = mean_rec(perturbed);
    for (int s = 0; s < 200; ++s) {
        const auto& b = batch[static_cast<size_t>(s) % batch.size()];
        finetune_adapter_step(perturbed, b.zt, b.t, b.image, sched, 1e-4);
    }
    double end = mean_rec(perturbed);
    bool frozen_ok = true;
    for (const auto& name : {"text_table", "adapter.w1", "adapter.b1", "trunk.w1", "trunk.b1",
                             "trunk.w2", "trunk.b2", "trunk.w3", "trunk.b3", "trunk.w4", "trunk.b4"})
        frozen_ok = frozen_ok && perturbed.tensor(name).data == before.tensor(name).data;

    double secs = timer.seconds();
    bool pass = end <= 0.5 * start && frozen_ok && secs < 120.0;
    report("A6", pass, secs,
           "mean rec loss " + fmt(start) + " -> " + fmt(end) + " (ratio " + fmt(end / start) +
               ") after 200 steps at lr 1e-4; non-adapter parameters bit-identical: " +
               (frozen_ok ? "yes" : "NO"));
    CHECK(end <= 0.5 * start);
    CHECK(frozen_ok);
    CHECK(secs < 120.0);
}

TEST_CASE("A7 filter semantics at the documented threshold") {
    Timer timer;
    GmmPrior prior = testing::point_mass_prior({0.0, 0.0});
    prior.text_map["a"] = {0};
    NoiseSchedule sched = make_schedule(1000, 1e-4, 0.02);
    AnalyticPredictor pred(prior, sched);
    Rng rng(1007);
    Vec eps = rng.normal_vec(2);
    int t = 321;
    Vec zt = add_noise(Vec{0.0, 0.0}, t, eps, sched);

    auto result_for = [&](double per_dim_loss, GuidanceVariant variant) {
        GuidanceConfig cfg;
        cfg.variant = variant;
        Vec image{std::sqrt(per_dim_loss * 2.0), 0.0};  // d = 2
        return anchords_guidance(pred, zt, t, "a", image, cfg, eps, sched);
    };
    GuidanceResult rejected = result_for(0.05, GuidanceVariant::AnchorDsFilter);
    GuidanceResult accepted = result_for(0.01, GuidanceVariant::AnchorDsFilter);
    GuidanceResult unfiltered = result_for(0.01, GuidanceVariant::AnchorDs);

    bool ok = rejected.filter_mask == 0 && norm(rejected.grad_z) == 0.0 &&
              accepted.filter_mask == 1 && max_abs_diff(accepted.grad_z, unfiltered.grad_z) == 0.0 &&
              filter_mask(0.03, 0.03) == 0;

    double secs = timer.seconds();
    bool pass = ok && secs < 1.0;
    report("A7", pass, secs,
           "rec 0.05 -> mask 0, zero grad; rec 0.01 -> mask 1, grad unchanged; rec == gamma -> mask 0");
    CHECK(ok);
    CHECK(secs < 1.0);
}

TEST_CASE("A8 distribution transport with a particle ensemble") {
    Timer timer;
    Experiment exp;
    exp.sched = make_schedule(1000, 1e-4, 0.02);
    exp.prior = testing::bimodal_prior();
    exp.views = make_views(2, 2, 1, 0);
    exp.run = testing::base_run("plus", 2000);
    exp.run.lr = 0.003;
    exp.run.guidance.variant = GuidanceVariant::AnchorDs;
    exp.run.guidance.target_cfg = false;
    exp.run.particles = 256;
    exp.run.init.kind = InitSpec::Kind::Gauss;
    exp.run.init.scale = 1.0;
    exp.run.metric_every = 1;
    exp.run.metric_target_samples = 10000;
    exp.run.metric_seed = 424242;
    Trajectory traj = run_experiment(exp);
    REQUIRE_FALSE(traj.aborted);
    REQUIRE(traj.metric_series.size() == 2001);  // tau = 0 plus every step

    double d0 = traj.metric_series.front().second;
    double dT = traj.metric_series.back().second;
    double ratio = d0 / dT;

    std::vector<double> smooth;
    for (size_t i = 0; i + 100 <= traj.metric_series.size(); ++i) {
        double acc = 0.0;
        for (size_t j = i; j < i + 100; ++j) acc += traj.metric_series[j].second;
        smooth.push_back(acc / 100.0);
    }
    int violations = 0;
    for (size_t i = 1; i < smooth.size(); ++i) violations += smooth[i] > smooth[i - 1];
    double viol_rate = static_cast<double>(violations) / static_cast<double>(smooth.size() - 1);

    double secs = timer.seconds();
    bool pass = ratio >= 5.0 && viol_rate <= 0.05 && secs < 600.0;
    report("A8", pass, secs,
           "energy distance " + fmt(d0) + " -> " + fmt(dT) + " (" + fmt(ratio) +
               "x); smoothed upward violations " + fmt(100.0 * viol_rate) + "%");
    CHECK(ratio >= 5.0);
    CHECK(viol_rate <= 0.05);
    CHECK(secs < 600.0);
}

TEST_CASE("A9 pullback gradient correctness") {
    Timer timer;
    NoiseSchedule sched = make_schedule(1000, 1e-4, 0.02);
    GmmPrior prior = testing::bimodal_prior();
    AnalyticPredictor pred(prior, sched);
    Rng rng(1009);
    double worst = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        int wd = rng.uniform_int(2, 4);
        ViewSet vs = make_views(wd, 2, 4, rng.next_u64());
        const View& view = vs.views[static_cast<size_t>(rng.uniform_int(0, 3))];
        Vec theta = rng.normal_vec(wd);
        int t = rng.uniform_int(20, 980);
        Vec eps = rng.normal_vec(2);
        GuidanceConfig gc;
        gc.variant = rep % 2 ? GuidanceVariant::AnchorDs : GuidanceVariant::VanillaSds;
        gc.omega = default_omega(gc.variant);

        Vec z = render(theta, view);
        GuidanceResult res =
            compute_guidance(pred, add_noise(z, t, eps, sched), t, "both", z, gc, eps, sched);
        Vec residual = res.grad_z;  // frozen per the custom-gradient convention

        Vec impl = backproject_grad(scale(residual, std::sqrt(sched.alpha_bar(t))), view);
        auto loss = [&](const Vec& th) {
            return dot(residual, add_noise(render(th, view), t, eps, sched));
        };
        Vec fd = oracle::fd_gradient(loss, theta, 1e-6);
        worst = std::max(worst, norm(sub(fd, impl)) / std::max(norm(fd), 1e-12));
    }
    double secs = timer.seconds();
    bool pass = worst <= 1e-4 && secs < 30.0;
    report("A9", pass, secs, "50 frozen-randomness instances, worst relative error " + fmt(worst));
    CHECK(worst <= 1e-4);
    CHECK(secs < 30.0);
}

TEST_CASE("A10 end-to-end determinism through the CLI") {
    Timer timer;
    fs::path tmp = fs::temp_directory_path() / ("sdlab_acc_" + std::to_string(::getpid()));
    fs::remove_all(tmp);
    fs::create_directories(tmp);

    json cfg;
    cfg["schedule"] = {{"total_steps", 1000}, {"beta_start", 1e-4}, {"beta_end", 0.02}};
    cfg["prior"] = {
        {"kind", "analytic"},
        {"dim", 2},
        {"components",
         {{{"weight", 0.4}, {"mean", {2.0, 0.0}}, {"variance", 0.1}},
          {{"weight", 0.4}, {"mean", {-2.0, 0.0}}, {"variance", 0.1}},
          {{"weight", 0.2}, {"mean", {0.0, 0.0}}, {"variance", 4.0}}}},
        {"text_map", {{"both", {0, 1}}}},
        {"image_bandwidth", 0.1}};
    cfg["views"] = {{"world_dim", 2}, {"count", 1}, {"seed", 0}};
    cfg["guidance"] = {{"variant", "anchords"}, {"target_cfg", true}};
    cfg["run"] = {{"steps", 60}, {"seed", 0}, {"lr", 0.005}, {"optimizer", "sgd"}, {"text", "both"}};
    {
        std::ofstream out(tmp / "cfg.json");
        out << cfg.dump(2);
    }

    auto sh = [&](const std::string& args) {
        std::string cmd = kBin + " " + args + " >" + (tmp / "log.txt").string() + " 2>&1";
        return WEXITSTATUS(std::system(cmd.c_str()));
    };
    bool ok = true;
    ok &= sh("run --config " + (tmp / "cfg.json").string() + " --out " + (tmp / "r1").string()) == 0;
    ok &= sh("run --config " + (tmp / "cfg.json").string() + " --out " + (tmp / "r2").string()) == 0;
    bool byte_identical = slurp(tmp / "r1/trajectory.csv") == slurp(tmp / "r2/trajectory.csv") &&
                          !slurp(tmp / "r1/trajectory.csv").empty();

    ok &= sh("sweep --config " + (tmp / "cfg.json").string() + " --out " + (tmp / "sw").string() +
             " --seeds 0,1 --variants vanilla-sds,anchords") == 0;
    bool pairing = true;
    for (int seed : {0, 1}) {
        json a = json::parse(slurp(tmp / ("sw/vanilla-sds/seed_" + std::to_string(seed)) / "summary.json"));
        json b = json::parse(slurp(tmp / ("sw/anchords/seed_" + std::to_string(seed)) / "summary.json"));
        pairing = pairing && a["stream_hash"] == b["stream_hash"];
    }

    double secs = timer.seconds();
    bool pass = ok && byte_identical && pairing && secs < 60.0;
    report("A10", pass, secs,
           std::string("repeat runs byte-identical: ") + (byte_identical ? "yes" : "NO") +
               "; sweep pairing hashes equal per seed: " + (pairing ? "yes" : "NO"));
    fs::remove_all(tmp);
    CHECK(ok);
    CHECK(byte_identical);
    CHECK(pairing);
    CHECK(secs < 60.0);
}
