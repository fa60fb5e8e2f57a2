#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <limits>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "sdlab/chart.hpp"
#include "sdlab/config.hpp"
#include "sdlab/io.hpp"
#include "sdlab/validate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitValidation = 3;

std::string default_out_root() {
    if (const char* env = std::getenv("SDLAB_OUT")) return env;
    return "out";
}

struct RunOutcome {
    bool ok = false;
    std::string error;
    std::string variant;
    uint64_t seed = 0;
    std::string stream_hash;
    double nearest_mode_distance = 0.0;
    double update_coherence = std::numeric_limits<double>::quiet_NaN();
};

RunOutcome execute_run(json cfg, const std::string& out_dir) {
    RunOutcome outcome;
    sdlab::Experiment exp = sdlab::experiment_from_json(cfg);
    outcome.variant = sdlab::variant_name(exp.run.guidance.variant);
    outcome.seed = exp.run.seed;

    sdlab::Trajectory traj = sdlab::run_experiment(exp);
    int world_dim = exp.views.views[0].world_dim;
    sdlab::write_trajectory_csv(out_dir + "/trajectory.csv", traj, world_dim);
    json summary = sdlab::summarize_run(exp, traj, cfg);
    sdlab::write_file(out_dir + "/summary.json", summary.dump(2) + "\n");

    if (traj.aborted) {
        outcome.error = "run aborted: " + traj.abort_reason + " (partial outputs in " + out_dir + ")";
        return outcome;
    }
    outcome.stream_hash = traj.stream_hash;
    outcome.nearest_mode_distance = summary["terminal"]["nearest_mode_distance"].get<double>();
    if (summary["terminal"]["update_coherence"].is_number())
        outcome.update_coherence = summary["terminal"]["update_coherence"].get<double>();
    outcome.ok = true;
    return outcome;
}

int cmd_run(const std::string& config_path, const std::string& out_dir) {
    json cfg = sdlab::load_json_file(config_path);
    RunOutcome o = execute_run(cfg, out_dir);
    if (!o.ok) {
        std::cerr << o.error << "\n";
        return kExitRuntime;
    }
    std::cout << "run complete: " << out_dir << "/trajectory.csv, " << out_dir << "/summary.json\n";
    return kExitOk;
}

std::vector<uint64_t> parse_seeds(const std::string& spec) {
    std::vector<uint64_t> seeds;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        auto dots = item.find("..");
        if (dots != std::string::npos) {
            uint64_t lo = std::stoull(item.substr(0, dots));
            uint64_t hi = std::stoull(item.substr(dots + 2));
            if (hi < lo) throw sdlab::ConfigError("--seeds: bad range '" + item + "'");
            for (uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
        } else {
            seeds.push_back(std::stoull(item));
        }
    }
    if (seeds.empty()) throw sdlab::ConfigError("--seeds: at least one seed required");
    return seeds;
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir,
              const std::string& seeds_spec, std::vector<std::string> variants, int jobs) {
    json base = sdlab::load_json_file(config_path);
    std::vector<uint64_t> seeds = parse_seeds(seeds_spec);
    if (variants.empty()) throw sdlab::ConfigError("--variants: at least one variant required");
    for (const auto& v : variants) sdlab::variant_from_name(v);

    struct Job {
        std::string variant;
        uint64_t seed;
        RunOutcome outcome;
    };
    std::vector<Job> jobs_list;
    for (const auto& v : variants)
        for (uint64_t s : seeds) jobs_list.push_back({v, s, {}});

    std::atomic<size_t> next{0};
    auto worker = [&]() {
        while (true) {
            size_t i = next.fetch_add(1);
            if (i >= jobs_list.size()) break;
            Job& job = jobs_list[i];
            json cfg = base;
            sdlab::set_variant(cfg, job.variant);
            sdlab::set_seed(cfg, job.seed);
            std::string dir = out_dir + "/" + job.variant + "/seed_" + std::to_string(job.seed);
            try {
                job.outcome = execute_run(cfg, dir);
            } catch (const std::exception& e) {
                job.outcome.ok = false;
                job.outcome.error = e.what();
            }
        }
    };
    int n_threads = std::max(1, jobs);
    std::vector<std::thread> pool;
    for (int i = 1; i < n_threads; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    bool any_failed = false;
    for (const auto& job : jobs_list)
        if (!job.outcome.ok) {
            any_failed = true;
            std::cerr << job.variant << " seed " << job.seed << " failed: " << job.outcome.error << "\n";
        }

    // pairing check: identical draw streams across variants for each seed
    bool pairing_ok = true;
    for (uint64_t s : seeds) {
        std::string h;
        for (const auto& job : jobs_list) {
            if (job.seed != s || !job.outcome.ok) continue;
            if (h.empty())
                h = job.outcome.stream_hash;
            else if (h != job.outcome.stream_hash)
                pairing_ok = false;
        }
    }

    // aggregate: per-variant means and win rates on terminal nearest-mode distance
    std::ostringstream csv;
    csv << "variant,seeds,mean_nearest_mode_distance,median_nearest_mode_distance,"
           "mean_update_coherence,win_rate,pairing_ok\n";
    auto value_of = [&](const std::string& v, uint64_t s) -> const RunOutcome* {
        for (const auto& job : jobs_list)
            if (job.variant == v && job.seed == s && job.outcome.ok) return &job.outcome;
        return nullptr;
    };
    for (const auto& v : variants) {
        std::vector<double> dists, cohs;
        int wins = 0, contested = 0;
        for (uint64_t s : seeds) {
            const RunOutcome* mine = value_of(v, s);
            if (!mine) continue;
            dists.push_back(mine->nearest_mode_distance);
            if (!std::isnan(mine->update_coherence)) cohs.push_back(mine->update_coherence);
            bool beats_all = true, complete = true;
            for (const auto& other : variants) {
                if (other == v) continue;
                const RunOutcome* theirs = value_of(other, s);
                if (!theirs) {
                    complete = false;
                    break;
                }
                beats_all = beats_all && mine->nearest_mode_distance < theirs->nearest_mode_distance;
            }
            if (complete && variants.size() > 1) {
                ++contested;
                wins += beats_all ? 1 : 0;
            }
        }
        auto mean = [](const std::vector<double>& xs) {
            double a = 0.0;
            for (double x : xs) a += x;
            return xs.empty() ? 0.0 : a / xs.size();
        };
        std::vector<double> sorted = dists;
        std::sort(sorted.begin(), sorted.end());
        double median = sorted.empty() ? 0.0
                        : sorted.size() % 2 ? sorted[sorted.size() / 2]
                                            : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
        csv << v << ',' << dists.size() << ',' << sdlab::fmt_double(mean(dists)) << ','
            << sdlab::fmt_double(median) << ',' << sdlab::fmt_double(mean(cohs)) << ','
            << sdlab::fmt_double(contested ? static_cast<double>(wins) / contested : 0.0) << ','
            << (pairing_ok ? 1 : 0) << '\n';
    }
    sdlab::write_file(out_dir + "/sweep.csv", csv.str());
    std::cout << "sweep complete: " << out_dir << "/sweep.csv (pairing "
              << (pairing_ok ? "ok" : "MISMATCH") << ")\n";
    return any_failed ? kExitRuntime : kExitOk;
}

int cmd_validate(const std::string& out_path, bool mutate_eta) {
    sdlab::ValidateOptions opts;
    if (mutate_eta) opts.eta_scale = 1.0 + 1e-3;
    auto checks = sdlab::run_validation(opts);
    json report = sdlab::validation_report(checks);
    std::string text = report.dump(2) + "\n";
    if (!out_path.empty()) sdlab::write_file(out_path, text);
    std::cout << text;
    return report["pass"].get<bool>() ? kExitOk : kExitValidation;
}

int cmd_train_prior(const std::string& config_path, const std::string& out_dir) {
    json cfg = sdlab::load_json_file(config_path);
    sdlab::TrainPriorJob job = sdlab::train_job_from_json(cfg);
    sdlab::Denoiser model =
        sdlab::make_denoiser(job.prior, job.sched, job.pretrain.seed, job.width, job.adapter_hidden);
    std::vector<double> curve = sdlab::pretrain(model, job.prior, job.sched, job.pretrain);

    fs::create_directories(out_dir);
    std::string ckpt = out_dir + "/" + job.checkpoint_out;
    sdlab::save_checkpoint(model, ckpt);
    std::string curve_path =
        out_dir + "/" + (job.loss_curve_out.empty() ? "loss_curve.csv" : job.loss_curve_out);
    std::ostringstream csv;
    csv << "step,loss\n";
    for (size_t i = 0; i < curve.size(); ++i)
        csv << (i + 1) << ',' << sdlab::fmt_double(curve[i]) << '\n';
    sdlab::write_file(curve_path, csv.str());
    std::cout << "checkpoint: " << ckpt << "\nloss curve: " << curve_path << "\n";
    return kExitOk;
}

int cmd_report(const std::string& run_dir, std::string out_dir) {
    if (out_dir.empty()) out_dir = run_dir + "/charts";
    fs::create_directories(out_dir);
    sdlab::emit_run_charts(run_dir + "/trajectory.csv", out_dir);
    std::cout << "charts written to " << out_dir << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sdlab: a score-distillation laboratory on analytic diffusion priors"};
    app.require_subcommand(1);

    std::string config_path, out_dir, seeds_spec = "0", run_dir, report_out, validate_out;
    std::vector<std::string> variants;
    int jobs = 1;
    bool mutate_eta = false;

    auto* run = app.add_subcommand("run", "execute one optimization run");
    run->add_option("--config", config_path, "config file (JSON)")->required();
    run->add_option("--out", out_dir, "output directory");

    auto* sweep = app.add_subcommand("sweep", "seeded sweep over guidance variants");
    sweep->add_option("--config", config_path, "base config file (JSON)")->required();
    sweep->add_option("--out", out_dir, "output directory");
    sweep->add_option("--seeds", seeds_spec, "comma list and/or a..b ranges (default 0)");
    sweep->add_option("--variants", variants, "guidance variants")->delimiter(',')->required();
    sweep->add_option("--jobs", jobs, "concurrent runs (default 1)");

    auto* validate = app.add_subcommand("validate", "run the oracle and identity suite");
    validate->add_option("--out", validate_out, "also write the JSON report here");
    validate->add_flag("--mutate-eta", mutate_eta, "sensitivity fixture: corrupt eta and expect failure")
        ->group("");  // hidden

    auto* train = app.add_subcommand("train-prior", "pretrain the learned denoiser");
    train->add_option("--config", config_path, "training config file (JSON)")->required();
    train->add_option("--out", out_dir, "output directory");

    auto* report = app.add_subcommand("report", "emit SVG charts from a run directory");
    report->add_option("--run", run_dir, "run directory containing trajectory.csv")->required();
    report->add_option("--out", report_out, "chart output directory (default <run>/charts)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (out_dir.empty()) out_dir = default_out_root();
        if (run->parsed()) return cmd_run(config_path, out_dir);
        if (sweep->parsed()) return cmd_sweep(config_path, out_dir, seeds_spec, variants, jobs);
        if (validate->parsed()) return cmd_validate(validate_out, mutate_eta);
        if (train->parsed()) return cmd_train_prior(config_path, out_dir);
        if (report->parsed()) return cmd_report(run_dir, report_out);
    } catch (const sdlab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}
