// Copyright (c) the pcd authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace pcd {

/// Minimal deterministic SVG line plots: polylines, axes, ticks, legend.
/// No plotting dependency, byte-stable output for identical inputs.

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

namespace detail {

inline std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&')
      out += "&amp;";
    else if (c == '<')
      out += "&lt;";
    else if (c == '>')
      out += "&gt;";
    else
      out.push_back(c);
  }
  return out;
}

inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

}  // namespace detail

inline std::string render_line_plot(const std::string& title, const std::string& xlabel,
                                    const std::string& ylabel,
                                    const std::vector<PlotSeries>& series, int width = 640,
                                    int height = 420) {
  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  const double ml = 60, mr = 20, mt = 40, mb = 50;
  const double pw = width - ml - mr, ph = height - mt - mb;

  double x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;
  bool any = false;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!any) {
        x_lo = x_hi = s.x[i];
        y_lo = y_hi = s.y[i];
        any = true;
      }
      x_lo = std::min(x_lo, s.x[i]);
      x_hi = std::max(x_hi, s.x[i]);
      y_lo = std::min(y_lo, s.y[i]);
      y_hi = std::max(y_hi, s.y[i]);
    }
  if (x_hi - x_lo < 1e-12) x_hi = x_lo + 1.0;
  if (y_hi - y_lo < 1e-12) y_hi = y_lo + 1.0;
  const double x_pad = 0.05 * (x_hi - x_lo), y_pad = 0.05 * (y_hi - y_lo);
  x_lo -= x_pad;
  x_hi += x_pad;
  y_lo -= y_pad;
  y_hi += y_pad;

  auto px = [&](double v) { return ml + (v - x_lo) / (x_hi - x_lo) * pw; };
  auto py = [&](double v) { return mt + ph - (v - y_lo) / (y_hi - y_lo) * ph; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
         "\" height=\"" + std::to_string(height) + "\" viewBox=\"0 0 " + std::to_string(width) +
         " " + std::to_string(height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + detail::svg_num(width / 2.0) +
         "\" y=\"20\" font-family=\"monospace\" font-size=\"14\" text-anchor=\"middle\">" +
         detail::svg_escape(title) + "</text>\n";

  // axes
  svg += "<line x1=\"" + detail::svg_num(ml) + "\" y1=\"" + detail::svg_num(mt + ph) +
         "\" x2=\"" + detail::svg_num(ml + pw) + "\" y2=\"" + detail::svg_num(mt + ph) +
         "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + detail::svg_num(ml) + "\" y1=\"" + detail::svg_num(mt) + "\" x2=\"" +
         detail::svg_num(ml) + "\" y2=\"" + detail::svg_num(mt + ph) + "\" stroke=\"black\"/>\n";

  for (int t = 0; t <= 5; ++t) {
    const double fx = x_lo + (x_hi - x_lo) * t / 5.0;
    const double fy = y_lo + (y_hi - y_lo) * t / 5.0;
    svg += "<line x1=\"" + detail::svg_num(px(fx)) + "\" y1=\"" + detail::svg_num(mt + ph) +
           "\" x2=\"" + detail::svg_num(px(fx)) + "\" y2=\"" + detail::svg_num(mt + ph + 5) +
           "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + detail::svg_num(px(fx)) + "\" y=\"" + detail::svg_num(mt + ph + 18) +
           "\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"middle\">" +
           detail::tick_label(fx) + "</text>\n";
    svg += "<line x1=\"" + detail::svg_num(ml - 5) + "\" y1=\"" + detail::svg_num(py(fy)) +
           "\" x2=\"" + detail::svg_num(ml) + "\" y2=\"" + detail::svg_num(py(fy)) +
           "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + detail::svg_num(ml - 8) + "\" y=\"" + detail::svg_num(py(fy) + 3) +
           "\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"end\">" +
           detail::tick_label(fy) + "</text>\n";
  }

  svg += "<text x=\"" + detail::svg_num(ml + pw / 2) + "\" y=\"" +
         detail::svg_num(height - 12.0) +
         "\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\">" +
         detail::svg_escape(xlabel) + "</text>\n";
  svg += "<text x=\"16\" y=\"" + detail::svg_num(mt + ph / 2) +
         "\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         detail::svg_num(mt + ph / 2) + ")\">" + detail::svg_escape(ylabel) + "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % 8];
    std::string pts;
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      if (i) pts += " ";
      pts += detail::svg_num(px(series[s].x[i])) + "," + detail::svg_num(py(series[s].y[i]));
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" +
           pts + "\"/>\n";
    for (std::size_t i = 0; i < series[s].x.size(); ++i)
      svg += "<circle cx=\"" + detail::svg_num(px(series[s].x[i])) + "\" cy=\"" +
             detail::svg_num(py(series[s].y[i])) + "\" r=\"2.5\" fill=\"" + color + "\"/>\n";
    const double ly = mt + 14.0 * static_cast<double>(s);
    svg += "<line x1=\"" + detail::svg_num(ml + pw - 120) + "\" y1=\"" + detail::svg_num(ly) +
           "\" x2=\"" + detail::svg_num(ml + pw - 100) + "\" y2=\"" + detail::svg_num(ly) +
           "\" stroke=\"" + color + "\" stroke-width=\"1.5\"/>\n";
    svg += "<text x=\"" + detail::svg_num(ml + pw - 95) + "\" y=\"" + detail::svg_num(ly + 3) +
           "\" font-family=\"monospace\" font-size=\"10\">" + detail::svg_escape(series[s].label) +
           "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace pcd
