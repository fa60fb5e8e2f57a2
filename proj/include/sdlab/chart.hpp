#pragma once

#include <string>
#include <vector>

namespace sdlab {

struct ChartSeries {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

/// Standalone SVG line chart; no external tooling required to view it.
void write_line_chart_svg(const std::string& path, const std::string& title,
                          const std::string& xlabel, const std::string& ylabel,
                          const std::vector<ChartSeries>& series);

/// Reads a trajectory CSV and emits the standard chart set into out_dir.
void emit_run_charts(const std::string& trajectory_csv, const std::string& out_dir);

}  // namespace sdlab
