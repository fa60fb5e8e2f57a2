#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include <json.hpp>

#include "sdlab/config.hpp"
#include "sdlab/denoiser.hpp"
#include "sdlab/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kBin = SDLAB_BIN;
const std::string kSrc = SDLAB_SOURCE_DIR;

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("sdlab_cli_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string str() const { return path.string(); }
};

int run_cmd(const std::string& args, const fs::path& log) {
    std::string cmd = kBin + " " + args + " >" + log.string() + " 2>&1";
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json small_run_config(int steps = 40) {
    json cfg = sdlab::load_json_file(kSrc + "/configs/minimal.json");
    cfg["run"]["steps"] = steps;
    return cfg;
}

void write_json(const fs::path& p, const json& j) {
    std::ofstream out(p);
    out << j.dump(2);
}

}  // namespace

TEST_CASE("run: produces trajectory and summary, deterministic across invocations") {
    TempDir tmp;
    write_json(tmp.path / "cfg.json", small_run_config());

    int rc = run_cmd("run --config " + (tmp.path / "cfg.json").string() + " --out " + tmp.str() + "/a",
                     tmp.path / "log1.txt");
    CHECK(rc == 0);
    CHECK(fs::exists(tmp.path / "a/trajectory.csv"));
    CHECK(fs::exists(tmp.path / "a/summary.json"));

    std::string csv = slurp(tmp.path / "a/trajectory.csv");
    int rows = 0;
    for (char c : csv) rows += c == '\n';
    CHECK(rows == 41);  // header + one row per step

    json summary = json::parse(slurp(tmp.path / "a/summary.json"));
    CHECK(summary["steps_completed"] == 40);
    CHECK(summary["config"]["run"]["steps"] == 40);  // config echo
    CHECK(summary["terminal"].contains("nearest_mode_distance"));

    rc = run_cmd("run --config " + (tmp.path / "cfg.json").string() + " --out " + tmp.str() + "/b",
                 tmp.path / "log2.txt");
    CHECK(rc == 0);
    CHECK(slurp(tmp.path / "b/trajectory.csv") == csv);
}

TEST_CASE("run: config errors name the field and exit with status 1") {
    TempDir tmp;
    json cfg = small_run_config();
    cfg["guidance"]["variant"] = "mystery";
    write_json(tmp.path / "bad.json", cfg);
    int rc = run_cmd("run --config " + (tmp.path / "bad.json").string() + " --out " + tmp.str(),
                     tmp.path / "log.txt");
    CHECK(rc == 1);
    std::string log = slurp(tmp.path / "log.txt");
    CHECK(log.find("variant") != std::string::npos);

    rc = run_cmd("run --config " + tmp.str() + "/missing.json --out " + tmp.str(),
                 tmp.path / "log2.txt");
    CHECK(rc == 1);
}

TEST_CASE("run: runtime aborts keep partial outputs and exit with status 2") {
    TempDir tmp;
    json cfg = small_run_config(500);
    cfg["run"]["lr"] = 1e12;
    write_json(tmp.path / "explode.json", cfg);
    int rc = run_cmd("run --config " + (tmp.path / "explode.json").string() + " --out " + tmp.str() + "/x",
                     tmp.path / "log.txt");
    CHECK(rc == 2);
    CHECK(fs::exists(tmp.path / "x/trajectory.csv"));
    json summary = json::parse(slurp(tmp.path / "x/summary.json"));
    CHECK(summary["aborted"] == true);
}

TEST_CASE("sweep: per-seed pairing and the aggregate table") {
    TempDir tmp;
    write_json(tmp.path / "cfg.json", small_run_config());
    int rc = run_cmd("sweep --config " + (tmp.path / "cfg.json").string() + " --out " + tmp.str() +
                         "/sw --seeds 0,1 --variants vanilla-sds,anchords --jobs 2",
                     tmp.path / "log.txt");
    CHECK(rc == 0);
    CHECK(fs::exists(tmp.path / "sw/sweep.csv"));
    std::string table = slurp(tmp.path / "sw/sweep.csv");
    CHECK(table.find("vanilla-sds") != std::string::npos);
    CHECK(table.find("anchords") != std::string::npos);

    for (uint64_t seed : {0ull, 1ull}) {
        json a = json::parse(slurp(tmp.path / ("sw/vanilla-sds/seed_" + std::to_string(seed)) / "summary.json"));
        json b = json::parse(slurp(tmp.path / ("sw/anchords/seed_" + std::to_string(seed)) / "summary.json"));
        CHECK(a["stream_hash"] == b["stream_hash"]);  // common random numbers
    }
    // pairing flag recorded in the table
    CHECK(table.find(",1\n") != std::string::npos);
}

TEST_CASE("sweep: a single seed and variant reduces to cmd_run plus the aggregate") {
    TempDir tmp;
    write_json(tmp.path / "cfg.json", small_run_config());
    int rc = run_cmd("sweep --config " + (tmp.path / "cfg.json").string() + " --out " + tmp.str() +
                         "/sw --seeds 3 --variants anchords",
                     tmp.path / "log.txt");
    CHECK(rc == 0);
    CHECK(fs::exists(tmp.path / "sw/anchords/seed_3/trajectory.csv"));
    CHECK(fs::exists(tmp.path / "sw/sweep.csv"));

    json cfg = small_run_config();
    cfg["run"]["seed"] = 3;
    write_json(tmp.path / "single.json", cfg);
    run_cmd("run --config " + (tmp.path / "single.json").string() + " --out " + tmp.str() + "/single",
            tmp.path / "log2.txt");
    CHECK(slurp(tmp.path / "single/trajectory.csv") ==
          slurp(tmp.path / "sw/anchords/seed_3/trajectory.csv"));
}

TEST_CASE("validate: green on a fresh build, red under the eta mutation") {
    TempDir tmp;
    int rc = run_cmd("validate --out " + tmp.str() + "/report.json", tmp.path / "log.txt");
    CHECK(rc == 0);
    json report = json::parse(slurp(tmp.path / "report.json"));
    CHECK(report["checks"].size() >= 12);
    CHECK(report["pass"] == true);

    rc = run_cmd("validate --mutate-eta", tmp.path / "log2.txt");
    CHECK(rc == 3);
    json mutated = json::parse(slurp(tmp.path / "log2.txt"));
    bool eq8_failed = false;
    for (const auto& c : mutated["checks"])
        if (c["name"] == "guidance.m1_reconstruction_identity" && c["pass"] == false) eq8_failed = true;
    CHECK(eq8_failed);
}

TEST_CASE("train-prior: zero steps write the untouched initialization") {
    TempDir tmp;
    json cfg = sdlab::load_json_file(kSrc + "/configs/train_prior.json");
    cfg["train"]["steps"] = 0;
    write_json(tmp.path / "train.json", cfg);
    int rc = run_cmd("train-prior --config " + (tmp.path / "train.json").string() + " --out " + tmp.str(),
                     tmp.path / "log.txt");
    CHECK(rc == 0);
    sdlab::Denoiser loaded = sdlab::load_checkpoint(tmp.str() + "/denoiser.ckpt");

    sdlab::TrainPriorJob job = sdlab::train_job_from_json(cfg);
    sdlab::Denoiser fresh =
        sdlab::make_denoiser(job.prior, job.sched, job.pretrain.seed, job.width, job.adapter_hidden);
    REQUIRE(loaded.params.size() == fresh.params.size());
    for (size_t i = 0; i < fresh.params.size(); ++i)
        CHECK(loaded.params[i].data == fresh.params[i].data);
}

TEST_CASE("train-prior: a short run drives the loss well below initialization") {
    TempDir tmp;
    json cfg = sdlab::load_json_file(kSrc + "/configs/train_prior.json");
    cfg["train"]["steps"] = 1500;
    write_json(tmp.path / "train.json", cfg);
    int rc = run_cmd("train-prior --config " + (tmp.path / "train.json").string() + " --out " + tmp.str(),
                     tmp.path / "log.txt");
    CHECK(rc == 0);
    CHECK(fs::exists(tmp.path / "denoiser.ckpt"));

    std::string curve = slurp(tmp.path / "loss_curve.csv");
    std::istringstream in(curve);
    std::string line;
    std::getline(in, line);  // header
    double first = 0.0, last = 0.0;
    bool got_first = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        double v = std::stod(line.substr(line.find(',') + 1));
        if (!got_first) {
            first = v;
            got_first = true;
        }
        last = v;
    }
    CHECK(got_first);
    CHECK(last * 10.0 < first);
}

TEST_CASE("report: emits the chart set from a finished run") {
    TempDir tmp;
    write_json(tmp.path / "cfg.json", small_run_config());
    run_cmd("run --config " + (tmp.path / "cfg.json").string() + " --out " + tmp.str() + "/r",
            tmp.path / "log.txt");
    int rc = run_cmd("report --run " + tmp.str() + "/r", tmp.path / "log2.txt");
    CHECK(rc == 0);
    CHECK(fs::exists(tmp.path / "r/charts/grad_norm.svg"));
    CHECK(fs::exists(tmp.path / "r/charts/rec_loss.svg"));
    CHECK(fs::exists(tmp.path / "r/charts/theta_path.svg"));
    std::string svg = slurp(tmp.path / "r/charts/grad_norm.svg");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("polyline") != std::string::npos);
}

TEST_CASE("learned prior: train then run anchords-finetune through the CLI") {
    TempDir tmp;
    json train = sdlab::load_json_file(kSrc + "/configs/train_prior.json");
    train["train"]["steps"] = 300;
    write_json(tmp.path / "train.json", train);
    REQUIRE(run_cmd("train-prior --config " + (tmp.path / "train.json").string() + " --out " +
                        tmp.str() + "/prior",
                    tmp.path / "log.txt") == 0);

    json cfg = sdlab::load_json_file(kSrc + "/configs/learned_anchords.json");
    cfg["prior"]["checkpoint"] = tmp.str() + "/prior/denoiser.ckpt";
    cfg["run"]["steps"] = 30;
    write_json(tmp.path / "run.json", cfg);
    int rc = run_cmd("run --config " + (tmp.path / "run.json").string() + " --out " + tmp.str() + "/lr",
                     tmp.path / "log2.txt");
    CHECK(rc == 0);
    json summary = json::parse(slurp(tmp.path / "lr/summary.json"));
    CHECK(summary["steps_completed"] == 30);

    // checkpoint dimension mismatches are config errors
    json bad = cfg;
    bad["prior"]["dim"] = 3;
    bad["prior"]["components"] = json::array(
        {{{"weight", 1.0}, {"mean", {0.0, 0.0, 0.0}}, {"variance", 0.1}}});
    bad["prior"]["text_map"] = {{"both", {0}}};
    write_json(tmp.path / "bad.json", bad);
    CHECK(run_cmd("run --config " + (tmp.path / "bad.json").string() + " --out " + tmp.str() + "/bad",
                  tmp.path / "log3.txt") == 1);
}

TEST_CASE("multi-view runs report view consistency in the summary") {
    TempDir tmp;
    json cfg = small_run_config();
    cfg["views"]["count"] = 4;
    write_json(tmp.path / "cfg.json", cfg);
    REQUIRE(run_cmd("run --config " + (tmp.path / "cfg.json").string() + " --out " + tmp.str() + "/mv",
                    tmp.path / "log.txt") == 0);
    json summary = json::parse(slurp(tmp.path / "mv/summary.json"));
    CHECK(summary["terminal"].contains("view_consistency"));
    double vc = summary["terminal"]["view_consistency"].get<double>();
    CHECK(vc >= 0.0);
    CHECK(vc <= 1.0);
}

TEST_CASE("SDLAB_OUT provides the default output root") {
    TempDir tmp;
    write_json(tmp.path / "cfg.json", small_run_config(10));
    std::string cmd = "SDLAB_OUT=" + tmp.str() + "/envout " + kBin + " run --config " +
                      (tmp.path / "cfg.json").string() + " >" + (tmp.path / "log.txt").string() +
                      " 2>&1";
    CHECK(WEXITSTATUS(std::system(cmd.c_str())) == 0);
    CHECK(fs::exists(tmp.path / "envout/trajectory.csv"));
}

TEST_CASE("shipped configs parse and build") {
    for (const char* name : {"bimodal.json", "negsource.json", "transport.json", "minimal.json"}) {
        json cfg = sdlab::load_json_file(kSrc + "/configs/" + std::string(name));
        CHECK_NOTHROW(sdlab::experiment_from_json(cfg));
    }
    CHECK_NOTHROW(sdlab::train_job_from_json(sdlab::load_json_file(kSrc + "/configs/train_prior.json")));
}
