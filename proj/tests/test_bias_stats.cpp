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

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "lenbias/bias_stats.hpp"
#include "lenbias/rng.hpp"
#include "lenbias/scorer_gateway.hpp"

namespace lenbias {
namespace {

PassageGroup group(const std::string& doc, std::size_t n, const std::string& lang = "en-de") {
  PassageGroup g{doc, lang, {}};
  for (std::size_t i = 1; i <= n; ++i) g.passages.push_back({i, "s", "h", i, i});
  return g;
}

// Reference implementation written directly from the definitions.
struct Oracle {
  static std::vector<double> curve(const std::vector<std::vector<double>>& s) {
    std::size_t longest = 0;
    for (const auto& v : s) longest = std::max(longest, v.size());
    std::vector<double> out(longest, 0.0);
    for (std::size_t i = 1; i < longest; ++i) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto& v : s) {
        if (v.size() > i) {
          sum += v[i] - v[0];
          ++n;
        }
      }
      out[i] = sum / static_cast<double>(n);
    }
    return out;
  }
  static double trend(const std::vector<std::vector<double>>& s, std::size_t last) {
    std::size_t n = 0;
    std::size_t dec = 0;
    for (const auto& v : s) {
      if (v.size() < last) continue;
      ++n;
      dec += v[last - 1] < v[0] ? 1 : 0;
    }
    return n == 0 ? 0.0 : static_cast<double>(dec) / static_cast<double>(n);
  }
  // Roots of (p - phat)^2 = z^2 p (1 - p) / n.
  static std::pair<double, double> wilson(double k, double n, double z) {
    const double phat = k / n;
    const double a = 1.0 + z * z / n;
    const double b = -(2.0 * phat + z * z / n);
    const double c = phat * phat;
    const double disc = std::sqrt(std::max(0.0, b * b - 4.0 * a * c));
    return {std::max(0.0, (-b - disc) / (2.0 * a)), std::min(1.0, (-b + disc) / (2.0 * a))};
  }
};

TEST(BiasEstimateTest, Example) {
  const auto b = bias_estimate(std::vector<double>{-1.0, -2.0, -3.0}, -1.0);
  EXPECT_EQ(b.mean_prediction, -2.0);
  EXPECT_EQ(b.bias, -1.0);
  EXPECT_EQ(b.n, 3u);
  EXPECT_THROW(bias_estimate(std::vector<double>{}, 0.0), ConfigError);
}

TEST(DeltaCurveTest, Example) {
  const std::vector<PassageGroup> groups = {group("a", 3), group("b", 2)};
  const std::vector<std::vector<double>> scores = {{-1.0, -2.0, -4.0}, {-2.0, -2.5}};
  const auto c = delta_curve(groups, scores);
  ASSERT_EQ(c.points.size(), 3u);
  EXPECT_EQ(c.points[0].mean_delta, 0.0);
  EXPECT_EQ(c.points[1].mean_delta, -0.75);
  EXPECT_EQ(c.points[1].n, 2u);
  EXPECT_DOUBLE_EQ(c.points[1].stddev, std::sqrt(0.125));
  EXPECT_EQ(c.points[2].mean_delta, -3.0);
  EXPECT_EQ(c.points[2].stddev, 0.0);
  EXPECT_DOUBLE_EQ(slope_of_score_changes(c), (0.75 + 2.25) / 2.0);
}

TEST(DeltaCurveTest, MissingScoreIsAnError) {
  const std::vector<PassageGroup> groups = {group("a", 3)};
  EXPECT_THROW(delta_curve(groups, std::vector<std::vector<double>>{{-1.0, -2.0}}), ConfigError);
  EXPECT_THROW(delta_curve(groups, std::vector<std::vector<double>>{}), ConfigError);
}

TEST(TrendTest, StrictDecreaseOnly) {
  const std::vector<PassageGroup> groups = {group("a", 5), group("b", 5), group("c", 5), group("d", 3)};
  const std::vector<std::vector<double>> scores = {
      {0, 0, 0, 0, -1}, {-1, 0, 0, 0, -1}, {-1, -9, -9, -9, 0}, {0, -1, -2}};
  const auto t = decreasing_trend_proportion(groups, scores);
  EXPECT_EQ(t.n_docs, 3u);
  EXPECT_EQ(t.n_decreasing, 1u);
  EXPECT_EQ(t.n_skipped, 1u);
  EXPECT_DOUBLE_EQ(t.proportion, 1.0 / 3.0);
  EXPECT_EQ(decreasing_trend_proportion(groups, scores, 1, 3).n_decreasing, 2u);
}

TEST(SlopeTest, FlatCurveHasZeroSlope) {
  DeltaCurve c;
  for (std::size_t i = 1; i <= 5; ++i) c.points.push_back({i, 0.0, 0.0, 10});
  EXPECT_EQ(slope_of_score_changes(c), 0.0);
  c.points.resize(1);
  EXPECT_THROW(slope_of_score_changes(c), ConfigError);
}

TEST(WilsonTest, FrozenValues) {
  auto [lo, hi] = wilson_ci(50, 100);
  EXPECT_NEAR(lo, 0.4038315303659956, 1e-12);
  EXPECT_NEAR(hi, 0.5961684696340044, 1e-12);
  std::tie(lo, hi) = wilson_ci(0, 10);
  EXPECT_EQ(lo, 0.0);
  EXPECT_NEAR(hi, 0.2775327998628914, 1e-12);
  std::tie(lo, hi) = wilson_ci(250, 500, 0.99);
  EXPECT_NEAR(lo, 0.44278109614549654, 1e-12);
  EXPECT_NEAR(hi, 0.5572189038545035, 1e-12);
  std::tie(lo, hi) = wilson_ci(3, 4);
  EXPECT_NEAR(lo, 0.3006418425824019, 1e-12);
  EXPECT_NEAR(hi, 0.9544127391902315, 1e-12);
  std::tie(lo, hi) = wilson_ci(10, 10);
  EXPECT_EQ(hi, 1.0);
}

TEST(WilsonTest, InvalidArguments) {
  EXPECT_THROW(wilson_ci(1, 0), ConfigError);
  EXPECT_THROW(wilson_ci(11, 10), ConfigError);
  EXPECT_THROW(wilson_ci(1, 10, 1.0), ConfigError);
}

// Agrees with the quadratic-root form for random (k, n), half-integer k included.
TEST(WilsonProperty, MatchesQuadraticRoots) {
  SplitMix64 rng(21);
  constexpr double kZ = 1.959963984540054;
  for (int t = 0; t < 2000; ++t) {
    const std::size_t n = 1 + rng.below(1000);
    const double k = 0.5 * static_cast<double>(rng.below(2 * n + 1));
    const auto [lo, hi] = wilson_ci(k, n);
    const auto [olo, ohi] = Oracle::wilson(k, static_cast<double>(n), kZ);
    EXPECT_NEAR(lo, olo, 1e-9) << k << "/" << n;
    EXPECT_NEAR(hi, ohi, 1e-9) << k << "/" << n;
    EXPECT_LE(lo, k / static_cast<double>(n));
    EXPECT_GE(hi, k / static_cast<double>(n));
  }
}

TEST(PreferenceTest, TiesCountHalf) {
  LengthBin bin{0.05, {}};
  for (const char* id : {"a", "b", "c", "d"}) bin.pairs.push_back({id, "", "", {}, {}, 0.1});
  const std::unordered_map<std::string, PairScore> scores = {
      {"a", {-1.0, -2.0}}, {"b", {-1.0, -1.0}}, {"c", {-3.0, -2.0}}, {"d", {0.0, -0.5}}};
  const auto r = shorter_preference_rate(bin, scores);
  EXPECT_EQ(r.n_pairs, 4u);
  EXPECT_EQ(r.shorter_wins, 2.5);
  EXPECT_EQ(r.rate, 0.625);
  const auto [lo, hi] = wilson_ci(2.5, 4);
  EXPECT_EQ(r.ci_low, lo);
  EXPECT_EQ(r.ci_high, hi);
  EXPECT_THROW(shorter_preference_rate(bin, {{"a", {0, 0}}}), ConfigError);
  const auto empty = shorter_preference_rate(LengthBin{0.1, {}}, scores);
  EXPECT_EQ(empty.n_pairs, 0u);
  EXPECT_EQ(empty.rate, 0.0);
}

TEST(HistogramTest, EdgesAndTopBin) {
  const std::vector<double> s = {0.0, -25.0, -0.5, -1.0, -1.0001, 0.1, -26.0};
  const auto h = score_histogram(s, 1.0, -25.0, 0.0);
  ASSERT_EQ(h.counts.size(), 25u);
  EXPECT_EQ(h.counts[0], 1u);
  EXPECT_EQ(h.counts[24], 3u);
  EXPECT_EQ(h.counts[23], 1u);
  EXPECT_EQ(h.overflow, 1u);
  EXPECT_EQ(h.underflow, 1u);
  EXPECT_EQ(h.total(), s.size());
  EXPECT_EQ(h.edge(24), -1.0);
  EXPECT_THROW(score_histogram(s, 0.0, -1.0, 0.0), ConfigError);
  EXPECT_THROW(score_histogram(s, 1.0, 0.0, 0.0), ConfigError);
}

TEST(HistogramTest, DensityBins) {
  const auto h = score_histogram(std::vector<double>{-0.005, -0.25, -0.0101}, 0.01, -0.25, 0.0);
  ASSERT_EQ(h.counts.size(), 25u);
  EXPECT_EQ(h.counts[24], 1u);
  EXPECT_EQ(h.counts[0], 1u);
  EXPECT_EQ(h.counts[23], 1u);
}

// delta_curve and the trend proportion agree with the oracle on random
// inputs, and neither depends on group order.
TEST(StatsProperty, OracleAgreementAndOrderFree) {
  SplitMix64 rng(77);
  for (int t = 0; t < 100; ++t) {
    std::vector<PassageGroup> groups;
    std::vector<std::vector<double>> scores;
    const std::size_t n = 1 + rng.below(40);
    for (std::size_t g = 0; g < n; ++g) {
      const std::size_t len = 1 + rng.below(5);
      groups.push_back(group("doc" + std::to_string(g), len, rng.below(2) ? "en-de" : "en-ja"));
      std::vector<double> s(len);
      // Coarse grid so that ties occur.
      for (auto& x : s) x = -0.5 * static_cast<double>(rng.below(20));
      scores.push_back(std::move(s));
    }
    const auto c = delta_curve(groups, scores);
    const auto oc = Oracle::curve(scores);
    ASSERT_EQ(c.points.size(), oc.size());
    for (std::size_t i = 0; i < oc.size(); ++i) EXPECT_NEAR(c.points[i].mean_delta, oc[i], 1e-9);
    EXPECT_NEAR(decreasing_trend_proportion(groups, scores).proportion, Oracle::trend(scores, 5), 1e-9);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    std::vector<PassageGroup> g2;
    std::vector<std::vector<double>> s2;
    for (const auto i : perm) {
      g2.push_back(groups[i]);
      s2.push_back(scores[i]);
    }
    const auto c2 = delta_curve(g2, s2);
    for (std::size_t i = 0; i < c.points.size(); ++i) {
      EXPECT_EQ(c.points[i].mean_delta, c2.points[i].mean_delta);
      EXPECT_EQ(c.points[i].stddev, c2.points[i].stddev);
    }
  }
}

// Negating lower-better scores yields the same statistics as the equivalent
// higher-better scorer.
TEST(StatsProperty, OrientationInvariance) {
  SplitMix64 rng(8);
  for (int t = 0; t < 50; ++t) {
    std::vector<PassageGroup> groups;
    std::vector<std::vector<double>> hb;
    std::vector<std::vector<double>> lb;
    for (std::size_t g = 0; g < 10; ++g) {
      groups.push_back(group("d" + std::to_string(g), 5));
      std::vector<double> s(5);
      std::vector<double> errs(5);
      for (std::size_t i = 0; i < 5; ++i) {
        errs[i] = static_cast<double>(rng.below(10));  // error total, lower is better
        s[i] = orient(errs[i], Orientation::kLowerBetter);
      }
      hb.push_back([&] {
        std::vector<double> v;
        for (const double e : errs) v.push_back(-e);
        return v;
      }());
      lb.push_back(s);
    }
    EXPECT_EQ(decreasing_trend_proportion(groups, hb).proportion, decreasing_trend_proportion(groups, lb).proportion);
    const auto a = delta_curve(groups, hb);
    const auto b = delta_curve(groups, lb);
    for (std::size_t i = 0; i < a.points.size(); ++i) EXPECT_EQ(a.points[i].mean_delta, b.points[i].mean_delta);
  }
}

}  // namespace
}  // namespace lenbias
