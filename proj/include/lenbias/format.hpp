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

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>

namespace lenbias::fmt {

// Rounds `value` to `decimals` places, ties to even, and renders it without
// exponent. Values within 1e-9 (relative) of a decimal tie count as ties,
// so 0.125 renders "0.12" even though its binary value is not exact.
inline std::string round_half_even(double value, int decimals) {
  if (!std::isfinite(value)) return std::isnan(value) ? "nan" : (value > 0 ? "inf" : "-inf");
  double scale = 1.0;
  for (int i = 0; i < decimals; ++i) scale *= 10.0;
  const double scaled = std::abs(value) * scale;
  const double floor_v = std::floor(scaled);
  const double frac = scaled - floor_v;
  double rounded;
  if (std::abs(frac - 0.5) <= 1e-9 * std::max(1.0, scaled)) {
    rounded = std::fmod(floor_v, 2.0) == 0.0 ? floor_v : floor_v + 1.0;
  } else {
    rounded = std::round(scaled);
  }
  const auto units = static_cast<std::uint64_t>(rounded);
  std::string digits = std::to_string(units);
  if (decimals > 0) {
    if (digits.size() <= static_cast<std::size_t>(decimals)) {
      digits.insert(0, static_cast<std::size_t>(decimals) + 1 - digits.size(), '0');
    }
    digits.insert(digits.size() - static_cast<std::size_t>(decimals), ".");
  }
  const bool negative = value < 0 && units != 0;
  return negative ? "-" + digits : digits;
}

// A fraction as a percentage with one decimal: 0.80085 -> "80.1".
inline std::string percent(double fraction) { return round_half_even(fraction * 100.0, 1); }

inline std::string score(double value) { return round_half_even(value, 2); }

// Threshold header: 0.025 -> "2.5%", 0.1 -> "10%".
inline std::string threshold_label(double threshold) {
  std::string s = round_half_even(threshold * 100.0, 3);
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  return s + "%";
}

// Fixed two-decimal coordinates for SVG output.
inline std::string coord(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

}  // namespace lenbias::fmt
