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
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lenbias/error.hpp"
#include "lenbias/normalize.hpp"
#include "lenbias/suite_builder.hpp"

// All statistics expect orientation-normalized scores: higher is better.

namespace lenbias {

struct BiasEstimate {
  double mean_prediction = 0.0;
  double true_quality = 0.0;
  double bias = 0.0;
  std::size_t n = 0;
};

// Bias = E[prediction] - true quality, E estimated by the sample mean.
inline BiasEstimate bias_estimate(std::span<const double> predictions, double true_quality) {
  if (predictions.empty()) throw ConfigError("bias_estimate: no predictions");
  const double mean = std::accumulate(predictions.begin(), predictions.end(), 0.0) /
                      static_cast<double>(predictions.size());
  return {mean, true_quality, mean - true_quality, predictions.size()};
}

struct DeltaPoint {
  std::size_t index = 1;  // passage index, 1-based
  double mean_delta = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 when n < 2
  std::size_t n = 0;
};

struct DeltaCurve {
  std::vector<DeltaPoint> points;
};

namespace detail {

inline void check_scored(std::span<const PassageGroup> groups, std::span<const std::vector<double>> scores) {
  if (groups.size() != scores.size()) {
    throw ConfigError("missing score: " + std::to_string(scores.size()) + " score lists for " +
                      std::to_string(groups.size()) + " groups");
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (scores[g].size() != groups[g].passages.size()) {
      throw ConfigError("missing score: group " + groups[g].doc_id + " has " +
                        std::to_string(groups[g].passages.size()) + " passages but " +
                        std::to_string(scores[g].size()) + " scores");
    }
  }
}

// Accumulation order: by (lang_pair, doc_id), independent of input order.
inline std::vector<std::size_t> canonical_order(std::span<const PassageGroup> groups) {
  std::vector<std::size_t> order(groups.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(groups[a].lang_pair, groups[a].doc_id) < std::tie(groups[b].lang_pair, groups[b].doc_id);
  });
  return order;
}

}  // namespace detail

// Per passage index, the mean over groups of (score_i - score_1). Groups
// shorter than an index do not contribute to it; documents weigh equally.
inline DeltaCurve delta_curve(std::span<const PassageGroup> groups, std::span<const std::vector<double>> scores) {
  detail::check_scored(groups, scores);
  std::size_t longest = 0;
  for (const auto& s : scores) longest = std::max(longest, s.size());
  std::vector<std::vector<double>> deltas(longest);
  for (const std::size_t g : detail::canonical_order(groups)) {
    const auto normalized = group_normalize(scores[g]);
    for (std::size_t i = 0; i < normalized.size(); ++i) deltas[i].push_back(normalized[i]);
  }
  DeltaCurve curve;
  for (std::size_t i = 0; i < longest; ++i) {
    const auto& d = deltas[i];
    DeltaPoint p{i + 1, 0.0, 0.0, d.size()};
    if (i > 0) {
      p.mean_delta = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
      if (d.size() > 1) {
        double ss = 0.0;
        for (const double x : d) ss += (x - p.mean_delta) * (x - p.mean_delta);
        p.stddev = std::sqrt(ss / static_cast<double>(d.size() - 1));
      }
    }
    curve.points.push_back(p);
  }
  return curve;
}

struct TrendResult {
  std::size_t n_docs = 0;
  std::size_t n_decreasing = 0;
  std::size_t n_skipped = 0;  // groups lacking the first or last index
  double proportion = 0.0;   // 0 when n_docs == 0
};

// A document trends down iff score(last) < score(first), strictly.
inline TrendResult decreasing_trend_proportion(std::span<const PassageGroup> groups,
                                               std::span<const std::vector<double>> scores,
                                               std::size_t first = 1, std::size_t last = 5) {
  detail::check_scored(groups, scores);
  if (first < 1 || last < 1) throw ConfigError("passage indices are 1-based");
  TrendResult r;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (scores[g].size() < std::max(first, last)) {
      ++r.n_skipped;
      continue;
    }
    ++r.n_docs;
    if (scores[g][last - 1] < scores[g][first - 1]) ++r.n_decreasing;
  }
  r.proportion = r.n_docs == 0 ? 0.0 : static_cast<double>(r.n_decreasing) / static_cast<double>(r.n_docs);
  return r;
}

// Mean absolute change between consecutive passage indices.
inline double slope_of_score_changes(const DeltaCurve& curve) {
  if (curve.points.size() < 2) throw ConfigError("slope needs at least 2 curve points");
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < curve.points.size(); ++i) {
    total += std::abs(curve.points[i + 1].mean_delta - curve.points[i].mean_delta);
  }
  return total / static_cast<double>(curve.points.size() - 1);
}

// Wilson score interval; `successes` may be fractional (ties count half).
inline std::pair<double, double> wilson_ci(double successes, std::size_t n, double level = 0.95) {
  if (n == 0) throw ConfigError("wilson_ci: n must be >= 1");
  if (successes < 0 || successes > static_cast<double>(n)) {
    throw ConfigError("wilson_ci: successes must lie in [0, n]");
  }
  if (!(level > 0 && level < 1)) throw ConfigError("wilson_ci: level must lie in (0, 1)");
  const double z = boost::math::quantile(boost::math::normal_distribution<double>(), 0.5 + level / 2.0);
  const double nn = static_cast<double>(n);
  const double p = successes / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  double low = std::clamp(center - half, 0.0, 1.0);
  double high = std::clamp(center + half, 0.0, 1.0);
  if (successes == 0) low = 0.0;
  if (successes == nn) high = 1.0;
  return {low, high};
}

struct PairScore {
  double shorter = 0.0;
  double longer = 0.0;
};

struct PreferenceResult {
  double threshold = 0.0;
  std::size_t n_pairs = 0;
  double shorter_wins = 0.0;  // ties count 0.5
  double rate = 0.0;          // 0 when n_pairs == 0
  double ci_low = 0.0;
  double ci_high = 1.0;
};

inline double preference_credit(const PairScore& s) {
  if (s.shorter > s.longer) return 1.0;
  if (s.shorter == s.longer) return 0.5;
  return 0.0;
}

inline PreferenceResult shorter_preference_rate(const LengthBin& bin,
                                                const std::unordered_map<std::string, PairScore>& scores,
                                                double level = 0.95) {
  PreferenceResult r;
  r.threshold = bin.threshold;
  r.n_pairs = bin.pairs.size();
  for (const auto& p : bin.pairs) {
    const auto it = scores.find(p.chunk_id);
    if (it == scores.end()) throw ConfigError("missing member score for chunk " + p.chunk_id);
    r.shorter_wins += preference_credit(it->second);
  }
  if (r.n_pairs > 0) {
    r.rate = r.shorter_wins / static_cast<double>(r.n_pairs);
    std::tie(r.ci_low, r.ci_high) = wilson_ci(r.shorter_wins, r.n_pairs, level);
  }
  return r;
}

// Bins are half-open [edge, edge + width) except the last, which is closed
// at `hi` so a perfect MQM score of 0 lands inside the range.
struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  double width = 1.0;
  std::vector<std::size_t> counts;
  std::size_t underflow = 0;
  std::size_t overflow = 0;

  double edge(std::size_t bin) const { return lo + width * static_cast<double>(bin); }
  std::size_t total() const {
    return std::accumulate(counts.begin(), counts.end(), std::size_t{0}) + underflow + overflow;
  }
};

inline Histogram score_histogram(std::span<const double> scores, double bin_width, double lo, double hi) {
  if (!(bin_width > 0)) throw ConfigError("histogram bin width must be > 0");
  if (!(lo < hi)) throw ConfigError("histogram range must satisfy lo < hi");
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.width = bin_width;
  const auto bins = static_cast<std::size_t>(std::ceil((hi - lo) / bin_width - 1e-9));
  h.counts.assign(std::max<std::size_t>(bins, 1), 0);
  for (const double x : scores) {
    if (x < lo) {
      ++h.underflow;
    } else if (x > hi) {
      ++h.overflow;
    } else {
      const auto k = static_cast<std::size_t>(std::floor((x - lo) / bin_width));
      ++h.counts[std::min(k, h.counts.size() - 1)];
    }
  }
  return h;
}

}  // namespace lenbias
