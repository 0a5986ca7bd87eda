/*
 * Copyright 2026 The lenbias Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lenbias/format.hpp"

namespace lenbias::svg {

inline constexpr double kWidth = 800;
inline constexpr double kHeight = 500;
inline constexpr double kLeft = 80;
inline constexpr double kRight = 640;  // legend lives to the right
inline constexpr double kTop = 50;
inline constexpr double kBottom = 430;

inline constexpr std::array<std::string_view, 10> kPalette = {
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

inline std::string escape(std::string_view text) {
  std::string out;
  for (const char c : text) {
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

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<double> x_ticks;
  std::vector<std::string> x_tick_labels;
  std::vector<Series> series;
};

namespace detail {

inline std::pair<double, double> padded_range(double lo, double hi) {
  if (!(lo < hi)) return {lo - 1.0, hi + 1.0};
  const double pad = (hi - lo) * 0.05;
  return {lo - pad, hi + pad};
}

inline std::string header(std::string_view title) {
  std::string s =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"500\" viewBox=\"0 0 800 500\">\n"
      "<rect x=\"0\" y=\"0\" width=\"800\" height=\"500\" fill=\"#ffffff\"/>\n";
  s += "<text x=\"400\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" +
       escape(title) + "</text>\n";
  return s;
}

inline std::string axes(std::string_view x_label, std::string_view y_label) {
  std::string s;
  s += "<line x1=\"" + fmt::coord(kLeft) + "\" y1=\"" + fmt::coord(kBottom) + "\" x2=\"" + fmt::coord(kRight) +
       "\" y2=\"" + fmt::coord(kBottom) + "\" stroke=\"#000000\"/>\n";
  s += "<line x1=\"" + fmt::coord(kLeft) + "\" y1=\"" + fmt::coord(kTop) + "\" x2=\"" + fmt::coord(kLeft) +
       "\" y2=\"" + fmt::coord(kBottom) + "\" stroke=\"#000000\"/>\n";
  s += "<text x=\"" + fmt::coord((kLeft + kRight) / 2) +
       "\" y=\"475\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + escape(x_label) +
       "</text>\n";
  s += "<text x=\"18\" y=\"" + fmt::coord((kTop + kBottom) / 2) +
       "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 18 " +
       fmt::coord((kTop + kBottom) / 2) + ")\">" + escape(y_label) + "</text>\n";
  return s;
}

inline std::string y_ticks(double lo, double hi) {
  std::string s;
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    const double y = kBottom - (kBottom - kTop) * k / 4.0;
    s += "<line x1=\"" + fmt::coord(kLeft - 4) + "\" y1=\"" + fmt::coord(y) + "\" x2=\"" + fmt::coord(kLeft) +
         "\" y2=\"" + fmt::coord(y) + "\" stroke=\"#000000\"/>\n";
    s += "<text x=\"" + fmt::coord(kLeft - 8) + "\" y=\"" + fmt::coord(y + 4) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" + fmt::coord(v) + "</text>\n";
  }
  return s;
}

}  // namespace detail

inline std::string render(const LineChart& chart) {
  double xmin = 0, xmax = 1, ymin = 0, ymax = 0;
  bool any = false;
  for (const auto& s : chart.series) {
    for (const auto& [x, y] : s.points) {
      if (!any) {
        xmin = xmax = x;
        ymin = ymax = y;
        any = true;
      }
      xmin = std::min(xmin, x), xmax = std::max(xmax, x);
      ymin = std::min(ymin, y), ymax = std::max(ymax, y);
    }
  }
  for (const double t : chart.x_ticks) xmin = std::min(xmin, t), xmax = std::max(xmax, t);
  if (!(xmin < xmax)) xmax = xmin + 1;
  const auto [ylo, yhi] = detail::padded_range(ymin, ymax);
  const auto px = [&](double x) { return kLeft + (kRight - kLeft) * (x - xmin) / (xmax - xmin); };
  const auto py = [&](double y) { return kBottom - (kBottom - kTop) * (y - ylo) / (yhi - ylo); };

  std::string s = detail::header(chart.title);
  s += detail::axes(chart.x_label, chart.y_label);
  s += detail::y_ticks(ylo, yhi);
  for (std::size_t i = 0; i < chart.x_ticks.size(); ++i) {
    const double x = px(chart.x_ticks[i]);
    s += "<text x=\"" + fmt::coord(x) + "\" y=\"" + fmt::coord(kBottom + 16) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" +
         escape(i < chart.x_tick_labels.size() ? chart.x_tick_labels[i] : fmt::coord(chart.x_ticks[i])) +
         "</text>\n";
  }
  for (std::size_t i = 0; i < chart.series.size(); ++i) {
    const auto& series = chart.series[i];
    const std::string color(kPalette[i % kPalette.size()]);
    std::string pts;
    for (const auto& [x, y] : series.points) {
      if (!pts.empty()) pts += ' ';
      pts += fmt::coord(px(x)) + "," + fmt::coord(py(y));
    }
    s += "<polyline data-series=\"" + escape(series.name) + "\" fill=\"none\" stroke=\"" + color +
         "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    const double ly = kTop + 10 + 18.0 * static_cast<double>(i);
    s += "<rect x=\"655\" y=\"" + fmt::coord(ly - 8) + "\" width=\"12\" height=\"4\" fill=\"" + color + "\"/>\n";
    s += "<text x=\"672\" y=\"" + fmt::coord(ly) + "\" font-family=\"sans-serif\" font-size=\"11\">" +
         escape(series.name) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

struct BarChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<double> edges;  // size = counts + 1
  std::vector<double> counts;
};

inline std::string render(const BarChart& chart) {
  std::string s = detail::header(chart.title);
  s += detail::axes(chart.x_label, chart.y_label);
  const double cmax = chart.counts.empty() ? 1.0 : std::max(1.0, *std::max_element(chart.counts.begin(), chart.counts.end()));
  s += detail::y_ticks(0.0, cmax);
  const std::size_t n = chart.counts.size();
  const double w = n == 0 ? 0 : (kRight - kLeft) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double h = (kBottom - kTop) * chart.counts[i] / cmax;
    s += "<rect x=\"" + fmt::coord(kLeft + w * static_cast<double>(i)) + "\" y=\"" + fmt::coord(kBottom - h) +
         "\" width=\"" + fmt::coord(w) + "\" height=\"" + fmt::coord(h) + "\" fill=\"#1f77b4\" stroke=\"#ffffff\"/>\n";
  }
  if (!chart.edges.empty()) {
    for (const std::size_t i : {std::size_t{0}, chart.edges.size() / 2, chart.edges.size() - 1}) {
      s += "<text x=\"" + fmt::coord(kLeft + w * static_cast<double>(i)) + "\" y=\"" + fmt::coord(kBottom + 16) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" + fmt::coord(chart.edges[i]) +
           "</text>\n";
    }
  }
  s += "</svg>\n";
  return s;
}

}  // namespace lenbias::svg
