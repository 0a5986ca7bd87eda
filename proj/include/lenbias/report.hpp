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

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lenbias/audit.hpp"
#include "lenbias/format.hpp"
#include "lenbias/io.hpp"
#include "lenbias/svg.hpp"

namespace lenbias {

// Empty-bin cell in preference tables.
inline constexpr std::string_view kEmptyCell = "\xE2\x80\x94 (0)";

// Keeps [A-Za-z0-9._-]; everything else becomes '_'.
inline std::string sanitize_filename(std::string_view name) {
  std::string out;
  for (const char c : name) {
    const bool keep = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' ||
                      c == '_' || c == '-';
    out += keep ? c : '_';
  }
  return out.empty() ? "_" : out;
}

inline std::string preference_cell(const PreferenceResult& r) {
  if (r.n_pairs == 0) return std::string(kEmptyCell);
  return fmt::percent(r.rate) + " (" + std::to_string(r.n_pairs) + ")";
}

namespace detail {

inline std::string csv_field(std::string_view v) {
  if (v.find_first_of(",\"\n") == std::string_view::npos) return std::string(v);
  std::string out = "\"";
  for (const char c : v) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

inline std::string csv_row(const std::vector<std::string>& fields) {
  std::string row;
  for (std::size_t i = 0; i < fields.size(); ++i) row += (i ? "," : "") + csv_field(fields[i]);
  return row + "\n";
}

inline std::string slope_cell(const std::optional<double>& s) { return s ? fmt::score(*s) : std::string(); }

}  // namespace detail

inline std::string trend_csv(const ScorerSection& s) {
  std::string out = detail::csv_row({"language", "n_docs", "proportion"});
  for (const auto& x : s.series) {
    out += detail::csv_row({x.language, std::to_string(x.trend.n_docs), fmt::percent(x.trend.proportion)});
  }
  return out;
}

inline std::string preference_csv(const PreferenceTable& t) {
  std::vector<std::string> header{"language"};
  for (const double th : t.thresholds) header.push_back(fmt::threshold_label(th));
  std::string out = detail::csv_row(header);
  for (const auto& row : t.rows) {
    std::vector<std::string> fields{row.language};
    for (const auto& c : row.cells) fields.push_back(preference_cell(c));
    out += detail::csv_row(fields);
  }
  return out;
}

inline std::string slope_csv(const BiasReport& r) {
  std::string out = detail::csv_row({"scorer", "series", "language", "slope"});
  for (const auto& s : r.scorers) {
    if (!s.ok()) continue;
    for (const auto& x : s.series) out += detail::csv_row({s.name, "base", x.language, detail::slope_cell(x.slope)});
    for (const auto& p : s.perturbations) {
      for (const auto& x : p.series) {
        out += detail::csv_row({s.name, p.category, x.language, detail::slope_cell(x.slope)});
      }
    }
  }
  return out;
}

// Machine-readable mirror of the CSV tables: each rendered cell appears as
// the same string, next to the unrounded value.
inline nlohmann::ordered_json tables_json(const BiasReport& r) {
  nlohmann::ordered_json j;
  j["config_digest"] = r.metadata.value("config_digest", std::string{});
  j["rounding"] = r.metadata.value("rounding", std::string("half-even; percentages to 1 decimal, scores to 2 decimals"));
  j["scorers"] = nlohmann::ordered_json::array();
  for (const auto& s : r.scorers) {
    nlohmann::ordered_json sj;
    sj["name"] = s.name;
    sj["status"] = s.status;
    if (!s.ok()) {
      sj["error"] = s.error;
      j["scorers"].push_back(std::move(sj));
      continue;
    }
    sj["trend"] = nlohmann::ordered_json::array();
    for (const auto& x : s.series) {
      sj["trend"].push_back({{"language", x.language},
                             {"n_docs", x.trend.n_docs},
                             {"n_decreasing", x.trend.n_decreasing},
                             {"proportion", fmt::percent(x.trend.proportion)},
                             {"proportion_value", x.trend.proportion}});
    }
    sj["preference"] = nlohmann::ordered_json::array();
    for (const auto& t : s.preference) {
      nlohmann::ordered_json tj;
      tj["direction"] = t.direction;
      tj["rows"] = nlohmann::ordered_json::array();
      for (const auto& row : t.rows) {
        nlohmann::ordered_json cells = nlohmann::ordered_json::array();
        for (const auto& c : row.cells) {
          cells.push_back({{"threshold", fmt::threshold_label(c.threshold)},
                           {"cell", preference_cell(c)},
                           {"n", c.n_pairs},
                           {"rate_value", c.rate},
                           {"ci_low", c.ci_low},
                           {"ci_high", c.ci_high}});
        }
        tj["rows"].push_back({{"language", row.language}, {"cells", std::move(cells)}});
      }
      sj["preference"].push_back(std::move(tj));
    }
    sj["slope"] = nlohmann::ordered_json::array();
    const auto add_slopes = [&](const std::string& series, const std::vector<SeriesResult>& xs) {
      for (const auto& x : xs) {
        sj["slope"].push_back({{"series", series},
                               {"language", x.language},
                               {"slope", detail::slope_cell(x.slope)},
                               {"slope_value", detail::optional_number(x.slope)}});
      }
    };
    add_slopes("base", s.series);
    for (const auto& p : s.perturbations) add_slopes(p.category, p.series);
    j["scorers"].push_back(std::move(sj));
  }
  return j;
}

// Writes trend_<scorer>.csv, preference_<scorer>_<direction>.csv, slope.csv
// and tables.json. Returns the written paths.
inline std::vector<std::filesystem::path> emit_tables(const BiasReport& r, const std::filesystem::path& dir) {
  io::ensure_directory(dir);
  std::vector<std::filesystem::path> written;
  const auto write = [&](const std::string& name, const std::string& content) {
    written.push_back(dir / name);
    io::write_file_atomic(written.back(), content);
  };
  for (const auto& s : r.scorers) {
    if (!s.ok()) continue;
    const std::string tag = sanitize_filename(s.name);
    write("trend_" + tag + ".csv", trend_csv(s));
    for (const auto& t : s.preference) {
      write("preference_" + tag + "_" + sanitize_filename(t.direction) + ".csv", preference_csv(t));
    }
  }
  write("slope.csv", slope_csv(r));
  write("tables.json", tables_json(r).dump(2) + "\n");
  return written;
}

namespace detail {

inline std::string length_unit(const BiasReport& r) { return r.metadata.value("length_unit", std::string("tokens")); }

inline svg::LineChart delta_chart(const std::string& title, const std::vector<SeriesResult>& series,
                                  const BiasReport& r) {
  svg::LineChart chart;
  chart.title = title;
  chart.x_label = "passage index i (p_i = first i segments; length in " + length_unit(r) + ")";
  chart.y_label = "mean score change relative to p_1";
  std::size_t longest = 0;
  for (const auto& x : series) {
    if (x.language == kAggregateLabel) continue;
    svg::Series s{x.language, {}};
    for (const auto& p : x.curve.points) s.points.emplace_back(static_cast<double>(p.index), p.mean_delta);
    longest = std::max(longest, x.curve.points.size());
    chart.series.push_back(std::move(s));
  }
  for (std::size_t i = 1; i <= longest; ++i) {
    chart.x_ticks.push_back(static_cast<double>(i));
    chart.x_tick_labels.push_back("p" + std::to_string(i));
  }
  return chart;
}

inline svg::LineChart preference_chart(const ScorerSection& s, const BiasReport& r) {
  svg::LineChart chart;
  chart.title = "Preference for shorter translations: " + s.name;
  chart.x_label = "relative length difference threshold (" + r.metadata.value("rel_diff_convention", std::string()) + ")";
  chart.y_label = "shorter preferred (%), ties count 0.5";
  std::vector<double> ticks;
  for (const auto& t : s.preference) {
    for (const auto& row : t.rows) {
      if (row.language == kAggregateLabel) continue;
      svg::Series series{row.language + " (" + t.direction + ")", {}};
      for (const auto& c : row.cells) {
        if (c.n_pairs > 0) series.points.emplace_back(c.threshold * 100.0, c.rate * 100.0);
      }
      chart.series.push_back(std::move(series));
    }
    for (const double th : t.thresholds) {
      if (std::find(ticks.begin(), ticks.end(), th) == ticks.end()) ticks.push_back(th);
    }
  }
  std::sort(ticks.begin(), ticks.end());
  for (const double th : ticks) {
    chart.x_ticks.push_back(th * 100.0);
    chart.x_tick_labels.push_back(fmt::threshold_label(th));
  }
  return chart;
}

inline svg::BarChart histogram_chart(const std::string& title, const std::string& x_label, const Histogram& h) {
  svg::BarChart chart;
  chart.title = title;
  chart.x_label = x_label;
  chart.y_label = "count";
  for (std::size_t i = 0; i <= h.counts.size(); ++i) chart.edges.push_back(i == h.counts.size() ? h.hi : h.edge(i));
  for (const auto c : h.counts) chart.counts.push_back(static_cast<double>(c));
  return chart;
}

}  // namespace detail

// Writes delta_<scorer>.svg (plus one per perturbation category),
// preference_<scorer>.svg and histogram_<scorer>_{raw,density}.svg.
inline std::vector<std::filesystem::path> emit_charts(const BiasReport& r, const std::filesystem::path& dir) {
  io::ensure_directory(dir);
  std::vector<std::filesystem::path> written;
  const auto write = [&](const std::string& name, const std::string& content) {
    written.push_back(dir / name);
    io::write_file_atomic(written.back(), content);
  };
  for (const auto& s : r.scorers) {
    if (!s.ok()) continue;
    const std::string tag = sanitize_filename(s.name);
    write("delta_" + tag + ".svg", svg::render(detail::delta_chart("Score change with passage length: " + s.name,
                                                                    s.series, r)));
    for (const auto& p : s.perturbations) {
      write("delta_" + tag + "_" + sanitize_filename(p.category) + ".svg",
            svg::render(detail::delta_chart("Score change with passage length, " + p.category + " error: " + s.name,
                                            p.series, r)));
    }
    if (!s.preference.empty()) write("preference_" + tag + ".svg", svg::render(detail::preference_chart(s, r)));
    if (s.raw_histogram) {
      write("histogram_" + tag + "_raw.svg",
            svg::render(detail::histogram_chart("Score distribution: " + s.name, "score", *s.raw_histogram)));
    }
    if (s.density_histogram) {
      write("histogram_" + tag + "_density.svg",
            svg::render(detail::histogram_chart("Error density distribution: " + s.name,
                                                "score per " + detail::length_unit(r) + " of hypothesis",
                                                *s.density_histogram)));
    }
  }
  return written;
}

}  // namespace lenbias
