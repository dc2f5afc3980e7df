#pragma once

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "margeff/errors.hpp"
#include "margeff/power.hpp"

namespace margeff {

namespace detail {

inline std::string svg_num(double v) {
  std::ostringstream os;
  os.precision(2);
  os << std::fixed << v;
  return os.str();
}

}  // namespace detail

// Minimal line plot of power curves with a horizontal rule at the desired
// power. No timestamps or other run metadata, so output is reproducible.
inline std::string render_power_curves_svg(const PowerCurveResult& result) {
  const double width = 720, height = 480;
  const double ml = 60, mr = 20, mt = 20, mb = 45;
  const double pw = width - ml - mr, ph = height - mt - mb;

  std::vector<std::string> model_order;
  int n_lo = 0, n_hi = 1;
  bool first = true;
  for (const auto& p : result.points) {
    if (std::find(model_order.begin(), model_order.end(), p.model) == model_order.end()) {
      model_order.push_back(p.model);
    }
    if (first) {
      n_lo = n_hi = p.n;
      first = false;
    }
    n_lo = std::min(n_lo, p.n);
    n_hi = std::max(n_hi, p.n);
  }
  if (first) throw Error(ErrorCode::empty_input, "no power-curve points to plot");
  if (n_hi == n_lo) n_hi = n_lo + 1;

  auto sx = [&](double n) { return ml + (n - n_lo) / static_cast<double>(n_hi - n_lo) * pw; };
  auto sy = [&](double p) { return mt + (1.0 - p) * ph; };

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b"};

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  // axes and gridlines at 0, 0.25, ..., 1
  for (int g = 0; g <= 4; ++g) {
    double p = g / 4.0;
    svg << "<line x1=\"" << detail::svg_num(ml) << "\" y1=\"" << detail::svg_num(sy(p))
        << "\" x2=\"" << detail::svg_num(ml + pw) << "\" y2=\"" << detail::svg_num(sy(p))
        << "\" stroke=\"#dddddd\"/>\n";
    svg << "<text x=\"" << detail::svg_num(ml - 8) << "\" y=\"" << detail::svg_num(sy(p) + 4)
        << "\" font-size=\"12\" text-anchor=\"end\">" << detail::svg_num(p) << "</text>\n";
  }
  for (int g = 0; g <= 5; ++g) {
    double n = n_lo + (n_hi - n_lo) * g / 5.0;
    svg << "<text x=\"" << detail::svg_num(sx(n)) << "\" y=\""
        << detail::svg_num(mt + ph + 18) << "\" font-size=\"12\" text-anchor=\"middle\">"
        << static_cast<int>(n + 0.5) << "</text>\n";
  }
  svg << "<line x1=\"" << detail::svg_num(ml) << "\" y1=\"" << detail::svg_num(mt)
      << "\" x2=\"" << detail::svg_num(ml) << "\" y2=\"" << detail::svg_num(mt + ph)
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << detail::svg_num(ml) << "\" y1=\"" << detail::svg_num(mt + ph)
      << "\" x2=\"" << detail::svg_num(ml + pw) << "\" y2=\"" << detail::svg_num(mt + ph)
      << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << detail::svg_num(ml + pw / 2) << "\" y=\""
      << detail::svg_num(height - 8) << "\" font-size=\"13\" text-anchor=\"middle\">"
      << "sample size</text>\n";

  // desired-power rule
  svg << "<line x1=\"" << detail::svg_num(ml) << "\" y1=\""
      << detail::svg_num(sy(result.desired_power)) << "\" x2=\"" << detail::svg_num(ml + pw)
      << "\" y2=\"" << detail::svg_num(sy(result.desired_power))
      << "\" stroke=\"#555555\" stroke-dasharray=\"6,4\"/>\n";

  for (std::size_t m = 0; m < model_order.size(); ++m) {
    const char* color = palette[m % 6];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : result.points) {
      if (p.model != model_order[m]) continue;
      svg << detail::svg_num(sx(p.n)) << "," << detail::svg_num(sy(p.mean_power)) << " ";
    }
    svg << "\"/>\n";
    svg << "<text x=\"" << detail::svg_num(ml + 10) << "\" y=\""
        << detail::svg_num(mt + 16 + 16 * static_cast<double>(m)) << "\" font-size=\"12\" fill=\""
        << color << "\">" << model_order[m] << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

inline void write_power_curves_svg(const PowerCurveResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path);
  out << render_power_curves_svg(result);
}

}  // namespace margeff
