#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "triplesurv/checkpoint.hpp"
#include "triplesurv/data.hpp"
#include "triplesurv/error.hpp"
#include "triplesurv/metrics.hpp"
#include "triplesurv/model.hpp"

namespace triplesurv {

struct EvalReport {
  double c_index = std::numeric_limits<double>::quiet_NaN();
  double ibs = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::pair<double, double>> tdauc_curve;
  double m_tdauc = std::numeric_limits<double>::quiet_NaN();
  double hr = std::numeric_limits<double>::quiet_NaN();
  bool hr_degenerate = false;
  double cutoff = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::pair<double, double>> brier_curve;
};

// Scores `data` with Eval-mode predictions. `cutoff` comes from the training
// set; pass NaN to skip the hazard ratio.
inline EvalReport evaluate_model(const ModelParams& params, const BinnedDataset& data, const TimeGrid& grid,
                                 double cutoff) {
  if (params.config.k_bins != grid.k_bins) {
    throw InvalidArgument("checkpoint has K=" + std::to_string(params.config.k_bins) + " but the time grid has K=" +
                          std::to_string(grid.k_bins));
  }
  const Matrix pmfs = predict_pmfs(params, data.features());
  const auto risks = risk_scores(pmfs);
  const auto times = data.times();
  const auto events = data.events();
  const auto t_grid = default_eval_times(grid);

  EvalReport r;
  r.c_index = c_index(risks, times, events);
  r.tdauc_curve = tdauc_curve(risks, times, events, t_grid);
  if (!r.tdauc_curve.empty()) r.m_tdauc = m_tdauc(risks, times, events, t_grid);
  r.brier_curve = brier_curve(pmfs, times, events, t_grid, grid);
  std::vector<double> xs, ys;
  for (const auto& [t, b] : r.brier_curve) {
    xs.push_back(t);
    ys.push_back(b);
  }
  r.ibs = time_average(xs, ys);
  r.cutoff = cutoff;
  if (std::isfinite(cutoff)) {
    const std::size_t high = static_cast<std::size_t>(std::count_if(risks.begin(), risks.end(), [&](double s) { return s > cutoff; }));
    if (high > 0 && high < risks.size()) {
      const auto hr = hazard_ratio(risks, times, events, cutoff);
      r.hr = hr.value;
      r.hr_degenerate = hr.degenerate;
    }
  }
  return r;
}

inline void write_report_csv(std::ostream& out, const std::string& model_name, const EvalReport& r) {
  out << "model,c_index,ibs,m_tdauc,hr,hr_degenerate,cutoff\n";
  out << model_name << ',' << format_real(r.c_index) << ',' << format_real(r.ibs) << ',' << format_real(r.m_tdauc) << ','
      << format_real(r.hr) << ',' << (r.hr_degenerate ? 1 : 0) << ',' << format_real(r.cutoff) << '\n';
}

inline void write_curve_csv(std::ostream& out, const std::string& value_name,
                            const std::vector<std::pair<double, double>>& curve) {
  out << "time," << value_name << '\n';
  for (const auto& [t, v] : curve) out << format_real(t) << ',' << format_real(v) << '\n';
}

// Minimal standalone SVG line chart.
inline std::string line_plot_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                                 const std::vector<std::pair<double, double>>& points, double y_min = 0.0,
                                 double y_max = 1.0) {
  constexpr double width = 640, height = 400, left = 60, right = 20, top = 40, bottom = 50;
  double x_min = 0.0, x_max = 1.0;
  if (!points.empty()) {
    x_min = points.front().first;
    x_max = points.back().first;
    if (!(x_max > x_min)) x_max = x_min + 1.0;
  }
  const auto px = [&](double x) { return left + (x - x_min) / (x_max - x_min) * (width - left - right); };
  const auto py = [&](double y) { return top + (y_max - y) / (y_max - y_min) * (height - top - bottom); };
  auto esc = [](const std::string& s) {
    std::string o;
    for (char c : s) {
      switch (c) {
        case '&': o += "&amp;"; break;
        case '<': o += "&lt;"; break;
        case '>': o += "&gt;"; break;
        case '"': o += "&quot;"; break;
        default: o += c;
      }
    }
    return o;
  };
  std::ostringstream s;
  s.precision(6);
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\" viewBox=\"0 0 "
    << width << ' ' << height << "\">\n"
    << "  <rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n"
    << "  <text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
    << esc(title) << "</text>\n"
    << "  <line x1=\"" << left << "\" y1=\"" << height - bottom << "\" x2=\"" << width - right << "\" y2=\""
    << height - bottom << "\" stroke=\"black\"/>\n"
    << "  <line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << height - bottom
    << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = y_min + (y_max - y_min) * i / 4.0;
    s << "  <text x=\"" << left - 6 << "\" y=\"" << py(y) + 4
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << y << "</text>\n";
    const double x = x_min + (x_max - x_min) * i / 4.0;
    s << "  <text x=\"" << px(x) << "\" y=\"" << height - bottom + 16
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << x << "</text>\n";
  }
  s << "  <text x=\"" << (left + width - right) / 2 << "\" y=\"" << height - 10
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << esc(x_label) << "</text>\n"
    << "  <text x=\"16\" y=\"" << (top + height - bottom) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << (top + height - bottom) / 2 << ")\" font-family=\"sans-serif\" font-size=\"13\">" << esc(y_label) << "</text>\n";
  if (!points.empty()) {
    s << "  <polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < points.size(); ++i)
      s << (i ? " " : "") << px(points[i].first) << ',' << py(std::clamp(points[i].second, y_min, y_max));
    s << "\"/>\n";
    for (const auto& [x, y] : points)
      s << "  <circle cx=\"" << px(x) << "\" cy=\"" << py(std::clamp(y, y_min, y_max)) << "\" r=\"3\" fill=\"steelblue\"/>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace triplesurv
