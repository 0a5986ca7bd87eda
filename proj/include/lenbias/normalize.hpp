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

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lenbias/error.hpp"

namespace lenbias {

// Error density: a rating spread over the hypothesis length.
struct DensityRecord {
  double density = 0.0;
  std::size_t length_tokens = 1;
  double rating = 0.0;
};

inline double to_density(double rating, std::size_t length_tokens) {
  if (length_tokens == 0) throw ConfigError("to_density: length must be >= 1");
  return rating / static_cast<double>(length_tokens);
}

inline double from_density(double density, std::size_t length_tokens) {
  if (length_tokens == 0) throw ConfigError("from_density: length must be >= 1");
  return density * static_cast<double>(length_tokens);
}

inline DensityRecord make_density_record(double rating, std::size_t length_tokens) {
  return {to_density(rating, length_tokens), length_tokens, rating};
}

// Scores relative to the first passage: out[i] = in[i] - in[0].
inline std::vector<double> group_normalize(std::span<const double> scores) {
  if (scores.empty()) throw ConfigError("group_normalize: empty score list");
  std::vector<double> out;
  out.reserve(scores.size());
  out.push_back(0.0);
  for (std::size_t i = 1; i < scores.size(); ++i) out.push_back(scores[i] - scores[0]);
  return out;
}

inline std::vector<double> group_normalize(const std::vector<double>& scores) {
  return group_normalize(std::span<const double>(scores));
}

}  // namespace lenbias
