#include "sdlab/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sdlab/metrics.hpp"

namespace sdlab {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << content;
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj, int world_dim) {
    std::ostringstream out;
    out << "tau,t,view";
    for (int i = 0; i < world_dim; ++i) out << ",theta_" << i;
    for (int i = 0; i < world_dim; ++i) out << ",gtheta_" << i;
    out << ",grad_norm,m1_norm,m2_norm,rec_loss,filter_mask,src_tgt_dist\n";
    for (const auto& r : traj.records) {
        out << r.tau << ',' << r.t << ',' << r.view;
        for (double v : r.theta) out << ',' << fmt_double(v);
        for (double v : r.grad_theta) out << ',' << fmt_double(v);
        out << ',' << fmt_double(r.grad_norm) << ',' << fmt_double(r.m1_norm) << ','
            << fmt_double(r.m2_norm) << ',' << fmt_double(r.rec_loss) << ','
            << fmt_double(r.filter_mask) << ',';
        if (!std::isnan(r.src_tgt)) out << fmt_double(r.src_tgt);
        out << '\n';
    }
    write_file(path, out.str());
}

nlohmann::json summarize_run(const Experiment& exp, const Trajectory& traj,
                             const nlohmann::json& config_echo) {
    nlohmann::json s;
    s["config"] = config_echo;
    s["seed"] = exp.run.seed;
    s["variant"] = variant_name(exp.run.guidance.variant);
    s["stream_hash"] = traj.stream_hash;
    s["aborted"] = traj.aborted;
    if (traj.aborted) s["abort_reason"] = traj.abort_reason;
    s["steps_completed"] = traj.records.size();

    nlohmann::json term;
    Vec centroid(traj.final_thetas.empty() ? Vec{} : Vec(traj.final_thetas[0].size(), 0.0));
    for (const auto& th : traj.final_thetas) axpy(1.0 / traj.final_thetas.size(), th, centroid);
    term["theta"] = centroid;

    const View& view0 = exp.views.views.at(0);
    Vec rendered = render(centroid, view0);
    auto [dist, mode] = nearest_mode(rendered, exp.prior, exp.run.text);
    term["nearest_mode_distance"] = dist;
    term["mode_id"] = mode;
    try {
        term["update_coherence"] = update_coherence(traj);
    } catch (const std::exception&) {
        term["update_coherence"] = nullptr;
    }
    if (exp.views.views.size() >= 2)
        term["view_consistency"] = view_consistency(traj.final_thetas, exp.views, exp.prior, exp.run.text);
    if (!traj.metric_series.empty())
        term["source_target_distance"] = traj.metric_series.back().second;
    s["terminal"] = term;

    if (!traj.metric_series.empty()) {
        auto series = nlohmann::json::array();
        for (const auto& [tau, v] : traj.metric_series) series.push_back({tau, v});
        s["metric_series"] = series;
    }
    return s;
}

}  // namespace sdlab
