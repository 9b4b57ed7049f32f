#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <spdlog/fmt/fmt.h>

#include "error.hpp"

namespace shapeflow {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  int width = 640;
  int height = 420;
};

namespace svg_detail {

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Axis {
  bool log = false;
  double lo = 0.0, hi = 1.0;  // in transformed units

  double map(double v) const { return log ? std::log10(v) : v; }

  std::vector<double> ticks() const {
    std::vector<double> t;
    if (log) {
      for (double e = std::ceil(lo); e <= hi + 1e-9; e += 1.0) t.push_back(e);
      if (t.size() > 8) {
        std::vector<double> thin;
        const auto step = static_cast<std::size_t>(std::ceil(t.size() / 8.0));
        for (std::size_t i = 0; i < t.size(); i += step) thin.push_back(t[i]);
        t = thin;
      }
      return t;
    }
    const double span = hi - lo;
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0})
      if (m * mag >= raw) {
        step = m * mag;
        break;
      }
    for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step) t.push_back(v);
    return t;
  }

  std::string label(double tick) const {
    if (log) return fmt::format("1e{}", static_cast<int>(std::lround(tick)));
    return fmt::format("{:g}", std::abs(tick) < 1e-12 ? 0.0 : tick);
  }
};

}  // namespace svg_detail

/// Line plot of one or more series as a standalone SVG document. Points that
/// cannot be shown on a log axis (nonpositive values) are dropped.
inline std::string render_svg_plot(const std::vector<PlotSeries>& series, const PlotOptions& opt) {
  using svg_detail::Axis;
  Axis ax{opt.log_x}, ay{opt.log_y};
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  auto usable = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!opt.log_x || x > 0.0) && (!opt.log_y || y > 0.0);
  };
  for (const auto& s : series)
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i)
      if (usable(s.x[i], s.y[i])) {
        xmin = std::min(xmin, ax.map(s.x[i]));
        xmax = std::max(xmax, ax.map(s.x[i]));
        ymin = std::min(ymin, ay.map(s.y[i]));
        ymax = std::max(ymax, ay.map(s.y[i]));
      }
  if (!std::isfinite(xmin)) xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
  if (xmax - xmin < 1e-300) xmin -= 0.5, xmax += 0.5;
  if (ymax - ymin < 1e-300) ymin -= 0.5, ymax += 0.5;
  if (opt.log_x) xmin = std::floor(xmin), xmax = std::ceil(xmax);
  if (opt.log_y) ymin = std::floor(ymin), ymax = std::ceil(ymax);
  ax.lo = xmin, ax.hi = xmax, ay.lo = ymin, ay.hi = ymax;

  const double left = 70, right = 20, top = 36, bottom = 50;
  const double pw = opt.width - left - right, ph = opt.height - top - bottom;
  auto px = [&](double v) { return left + (v - ax.lo) / (ax.hi - ax.lo) * pw; };
  auto py = [&](double v) { return top + ph - (v - ay.lo) / (ay.hi - ay.lo) * ph; };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
      "font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      opt.width, opt.height);
  s += fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n", opt.width / 2,
                   svg_detail::escape(opt.title));
  s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n", left, top,
                   pw, ph);
  for (double t : ax.ticks()) {
    const double x = px(t);
    s += fmt::format("<line x1=\"{:.2f}\" y1=\"{}\" x2=\"{:.2f}\" y2=\"{}\" stroke=\"#ddd\"/>\n", x, top, x, top + ph);
    s += fmt::format("<text x=\"{:.2f}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", x, top + ph + 16, ax.label(t));
  }
  for (double t : ay.ticks()) {
    const double y = py(t);
    s += fmt::format("<line x1=\"{}\" y1=\"{:.2f}\" x2=\"{}\" y2=\"{:.2f}\" stroke=\"#ddd\"/>\n", left, y, left + pw, y);
    s += fmt::format("<text x=\"{}\" y=\"{:.2f}\" text-anchor=\"end\">{}</text>\n", left - 6, y + 4, ay.label(t));
  }
  s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", left + pw / 2, opt.height - 12,
                   svg_detail::escape(opt.x_label));
  s += fmt::format("<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
                   top + ph / 2, top + ph / 2, svg_detail::escape(opt.y_label));

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& ser = series[k];
    const char* color = colors[k % 5];
    std::string pts;
    for (std::size_t i = 0; i < std::min(ser.x.size(), ser.y.size()); ++i)
      if (usable(ser.x[i], ser.y[i]))
        pts += fmt::format("{:.2f},{:.2f} ", px(ax.map(ser.x[i])), py(ay.map(ser.y[i])));
    s += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\" points=\"{}\"/>\n", color, pts);
    if (!ser.label.empty())
      s += fmt::format("<text x=\"{}\" y=\"{}\" fill=\"{}\">{}</text>\n", left + 8, top + 16 + 14 * k, color,
                       svg_detail::escape(ser.label));
  }
  s += "</svg>\n";
  return s;
}

inline void write_svg_plot(const std::filesystem::path& path, const std::vector<PlotSeries>& series,
                           const PlotOptions& opt) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << render_svg_plot(series, opt);
}

}  // namespace shapeflow
