#pragma once

#include <string>

#include <json.hpp>

#include "sdlab/optimizer.hpp"

namespace sdlab {

/// Shortest exact decimal form at 17 significant digits; round-trips bit-exactly.
std::string fmt_double(double v);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

/// Column order documented in docs/formats.md.
void write_trajectory_csv(const std::string& path, const Trajectory& traj, int world_dim);

/// Terminal metrics plus config echo; see docs/formats.md.
nlohmann::json summarize_run(const Experiment& exp, const Trajectory& traj,
                             const nlohmann::json& config_echo);

}  // namespace sdlab
