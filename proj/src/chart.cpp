#include "sdlab/chart.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "sdlab/io.hpp"

namespace sdlab {

namespace {

constexpr double kW = 840, kH = 500;
constexpr double kMargL = 70, kMargR = 20, kMargT = 40, kMargB = 50;

const char* kPalette[] = {"#1f6fb2", "#d1495b", "#3e8e5a", "#8d6cab", "#c98a2b", "#4a4a4a"};

std::string fmt_tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

}  // namespace

void write_line_chart_svg(const std::string& path, const std::string& title,
                          const std::string& xlabel, const std::string& ylabel,
                          const std::vector<ChartSeries>& series) {
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const auto& s : series)
        for (const auto& [x, y] : s.points) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    if (!std::isfinite(xmin) || !std::isfinite(ymin)) {
        xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + (std::fabs(ymin) > 0 ? std::fabs(ymin) * 0.1 : 1.0);

    double pw = kW - kMargL - kMargR, ph = kH - kMargT - kMargB;
    auto X = [&](double x) { return kMargL + (x - xmin) / (xmax - xmin) * pw; };
    auto Y = [&](double y) { return kH - kMargB - (y - ymin) / (ymax - ymin) * ph; };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
        << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << kW / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\""
        << " font-size=\"16\">" << title << "</text>\n";

    for (int i = 0; i <= 5; ++i) {
        double fx = xmin + (xmax - xmin) * i / 5.0;
        double fy = ymin + (ymax - ymin) * i / 5.0;
        svg << "<line x1=\"" << X(fx) << "\" y1=\"" << kMargT << "\" x2=\"" << X(fx) << "\" y2=\""
            << kH - kMargB << "\" stroke=\"#e0e0e0\"/>\n"
            << "<line x1=\"" << kMargL << "\" y1=\"" << Y(fy) << "\" x2=\"" << kW - kMargR
            << "\" y2=\"" << Y(fy) << "\" stroke=\"#e0e0e0\"/>\n"
            << "<text x=\"" << X(fx) << "\" y=\"" << kH - kMargB + 18
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << fmt_tick(fx)
            << "</text>\n"
            << "<text x=\"" << kMargL - 6 << "\" y=\"" << Y(fy) + 4
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt_tick(fy)
            << "</text>\n";
    }
    svg << "<rect x=\"" << kMargL << "\" y=\"" << kMargT << "\" width=\"" << pw << "\" height=\""
        << ph << "\" fill=\"none\" stroke=\"#606060\"/>\n"
        << "<text x=\"" << kMargL + pw / 2 << "\" y=\"" << kH - 10
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << xlabel
        << "</text>\n"
        << "<text x=\"18\" y=\"" << kMargT + ph / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 18 "
        << kMargT + ph / 2 << ")\">" << ylabel << "</text>\n";

    int ci = 0;
    for (const auto& s : series) {
        const char* color = kPalette[ci % 6];
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& [x, y] : s.points) svg << X(x) << ',' << Y(y) << ' ';
        svg << "\"/>\n";
        svg << "<text x=\"" << kW - kMargR - 8 << "\" y=\"" << kMargT + 16 + 16 * ci
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" << color
            << "\">" << s.name << "</text>\n";
        ++ci;
    }
    svg << "</svg>\n";
    write_file(path, svg.str());
}

namespace {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    int col(const std::string& name) const {
        for (size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }
};

CsvTable read_csv(const std::string& path) {
    std::istringstream in(read_file(path));
    CsvTable t;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (line.back() == ',') cells.emplace_back();
        if (first) {
            t.header = std::move(cells);
            first = false;
        } else {
            t.rows.push_back(std::move(cells));
        }
    }
    return t;
}

ChartSeries column_series(const CsvTable& t, const std::string& xcol, const std::string& ycol) {
    ChartSeries s;
    s.name = ycol;
    int xi = t.col(xcol), yi = t.col(ycol);
    if (xi < 0 || yi < 0) return s;
    for (const auto& row : t.rows) {
        if (yi >= static_cast<int>(row.size()) || row[static_cast<size_t>(yi)].empty()) continue;
        s.points.emplace_back(std::stod(row[static_cast<size_t>(xi)]),
                              std::stod(row[static_cast<size_t>(yi)]));
    }
    return s;
}

}  // namespace

void emit_run_charts(const std::string& trajectory_csv, const std::string& out_dir) {
    CsvTable t = read_csv(trajectory_csv);
    if (t.header.empty()) throw std::runtime_error("report: empty trajectory file " + trajectory_csv);

    write_line_chart_svg(out_dir + "/grad_norm.svg", "Gradient norm per step", "step", "|grad|",
                         {column_series(t, "tau", "grad_norm")});
    write_line_chart_svg(out_dir + "/rec_loss.svg", "Source reconstruction loss per step", "step",
                         "rec_loss", {column_series(t, "tau", "rec_loss")});
    write_line_chart_svg(out_dir + "/guidance_terms.svg", "Guidance term norms", "step", "norm",
                         {column_series(t, "tau", "m1_norm"), column_series(t, "tau", "m2_norm")});

    if (t.col("theta_0") >= 0 && t.col("theta_1") >= 0) {
        ChartSeries path;
        path.name = "theta path";
        int xi = t.col("theta_0"), yi = t.col("theta_1");
        for (const auto& row : t.rows)
            path.points.emplace_back(std::stod(row[static_cast<size_t>(xi)]),
                                     std::stod(row[static_cast<size_t>(yi)]));
        write_line_chart_svg(out_dir + "/theta_path.svg", "Asset trajectory", "theta_0", "theta_1",
                             {path});
    }
    ChartSeries st = column_series(t, "tau", "src_tgt_dist");
    if (!st.points.empty())
        write_line_chart_svg(out_dir + "/source_target.svg", "Source-to-target energy distance",
                             "step", "energy distance", {st});
}

}  // namespace sdlab
