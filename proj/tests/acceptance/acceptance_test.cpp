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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Tolerances are fixed here.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "lenbias/audit.hpp"
#include "lenbias/bias_stats.hpp"
#include "lenbias/normalize.hpp"
#include "lenbias/perturb.hpp"
#include "lenbias/report.hpp"
#include "lenbias/scorer_gateway.hpp"
#include "../test_support.hpp"

namespace {

using namespace lenbias;
using lenbias::testing::TempDir;

constexpr double kOracleTol = 1e-9;
constexpr double kDensityTol = 1e-12;
constexpr double kSlopeTol = 1e-9;
constexpr double kNullBiasLimit = 0.06;
constexpr double kSyntheticSeconds = 5.0;
constexpr double kNullSeconds = 5.0;
constexpr double kProtocolSeconds = 10.0;

struct Check {
  bool ok = true;
  std::string detail;
  void fail(const std::string& why) {
    if (ok) detail = why;
    ok = false;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

Check synthetic_bias_detection() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  TempDir dir;
  // Two corpora of 25 documents: 50 documents, 5 segments each.
  const auto config = lenbias::testing::synthetic_config(dir, 25, 1, {"synthetic_biased:name=biased,base=0,alpha=0.01,sigma=0"});
  const auto report = run_audit(config);
  const auto& s = report.scorers.at(0);
  const auto& agg = s.series.back();
  if (agg.language != kAggregateLabel || agg.trend.n_docs != 50) c.fail("expected 50 aggregated documents");
  if (agg.trend.proportion != 1.0) c.fail("trend proportion " + std::to_string(agg.trend.proportion));
  for (std::size_t i = 1; i < agg.curve.points.size(); ++i) {
    if (!(agg.curve.points[i].mean_delta < agg.curve.points[i - 1].mean_delta)) c.fail("delta curve not strictly decreasing");
  }
  std::size_t cells = 0;
  for (const auto& t : s.preference) {
    for (const auto& row : t.rows) {
      for (const auto& cell : row.cells) {
        if (cell.n_pairs == 0) continue;
        ++cells;
        if (cell.rate != 1.0) c.fail("preference rate " + std::to_string(cell.rate) + " in " + row.language);
      }
    }
  }
  if (cells == 0) c.fail("no populated preference bins");
  const double secs = seconds_since(t0);
  if (secs >= kSyntheticSeconds) c.fail("took " + std::to_string(secs) + " s");
  if (c.ok) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "50 docs, proportion 1.0, %zu bins at rate 1.0, %.2f s", cells, secs);
    c.detail = buf;
  }
  return c;
}

Check null_calibration() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  TempDir dir;
  const auto config = lenbias::testing::synthetic_config(dir, 2, 0, {"synthetic_biased:name=null,base=-2,alpha=0,sigma=0.5"}, 500);
  const auto r1 = run_audit(config);
  const auto r2 = run_audit(config);
  if (to_json(r1).dump() != to_json(r2).dump()) c.fail("not deterministic under a fixed seed");
  const auto& pb = r1.scorers.at(0).preference_bias;
  if (!pb || pb->n != 500) {
    c.fail("expected 500 pairs");
    return c;
  }
  const auto [lo, hi] = wilson_ci(250, 500, 0.99);
  const double rate = pb->mean_prediction;
  if (rate < lo || rate > hi) c.fail("rate " + std::to_string(rate) + " outside 99% interval of 0.5");
  if (std::abs(pb->bias) >= kNullBiasLimit) c.fail("|bias| " + std::to_string(std::abs(pb->bias)));
  const double secs = seconds_since(t0);
  if (secs >= kNullSeconds) c.fail("took " + std::to_string(secs) + " s");
  if (c.ok) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "rate %.4f in [%.4f, %.4f], bias %+.4f, %.2f s for two runs", rate, lo, hi, pb->bias,
                  secs);
    c.detail = buf;
  }
  return c;
}

Check density_round_trip() {
  Check c;
  SplitMix64 rng(2024);
  double worst = 0.0;
  for (int t = 0; t < 10000; ++t) {
    const double r = -25.0 * rng.uniform();
    const std::size_t len = 1 + rng.below(2000);
    const double err = std::abs(from_density(to_density(r, len), len) - r) / std::max(1.0, std::abs(r));
    worst = std::max(worst, err);
  }
  if (worst > kDensityTol) c.fail("relative error " + std::to_string(worst));
  if (c.ok) {
    char buf[120];
    std::snprintf(buf, sizeof buf, "10000 pairs, worst relative error %.3g", worst);
    c.detail = buf;
  }
  return c;
}

// A scorer emitting a constant density C: analysed in the density domain the
// curve is flat; wrapped back into ratings the slope is |C| times the mean
// per-step token increment.
Check normalization_efficacy() {
  Check c;
  constexpr double kDensity = -0.01;
  const auto suite = build_passage_groups(lenbias::testing::generated_corpus(20, 5, "en-de", 9), {},
                                          TokenCounter::whitespace());
  ScorerSpec constant;
  constant.name = "constant_density";
  constant.synthetic.base = kDensity;
  constant.synthetic.emit_density = true;
  const ScorerSpec wrapped = wrap_density_scorer(constant, TokenCounter::whitespace());

  std::vector<ScoreRequest> requests;
  for (const auto& g : suite.groups) {
    for (const auto& p : g.passages) {
      requests.push_back({passage_id(g, p.index), p.source_text, p.hypothesis_text, std::nullopt, ScoreMode::kQe});
    }
  }
  const auto density = score_batch(constant, requests);
  const auto ratings = score_batch(wrapped, requests);
  std::vector<std::vector<double>> d_scores;
  std::vector<std::vector<double>> r_scores;
  double increments = 0.0;
  std::size_t steps = 0;
  std::size_t k = 0;
  for (const auto& g : suite.groups) {
    d_scores.emplace_back();
    r_scores.emplace_back();
    for (std::size_t i = 0; i < g.passages.size(); ++i, ++k) {
      d_scores.back().push_back(density[k].score);
      r_scores.back().push_back(ratings[k].score);
      if (i > 0) {
        increments += static_cast<double>(g.passages[i].hypothesis_tokens - g.passages[i - 1].hypothesis_tokens);
        ++steps;
      }
    }
  }
  const double mean_increment = increments / static_cast<double>(steps);
  const double flat = slope_of_score_changes(delta_curve(suite.groups, d_scores));
  const double raw = slope_of_score_changes(delta_curve(suite.groups, r_scores));
  const double expected = std::abs(kDensity) * mean_increment;
  if (std::abs(flat) > kSlopeTol) c.fail("density-domain slope " + std::to_string(flat));
  if (std::abs(raw - expected) > kSlopeTol) {
    c.fail("rating slope " + std::to_string(raw) + " != " + std::to_string(expected));
  }
  if (c.ok) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "density slope %.3g; rating slope %.6f = %.2f x %.4f tokens/step", flat, raw,
                  std::abs(kDensity), mean_increment);
    c.detail = buf;
  }
  return c;
}

// Brute-force recomputations from the definitions.
namespace oracle {

std::size_t words(const std::string& s) {
  std::istringstream in(s);
  std::string w;
  std::size_t n = 0;
  while (in >> w) ++n;
  return n;
}

double curve_point(const std::vector<std::vector<double>>& s, std::size_t i) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : s) {
    if (v.size() > i) sum += v[i] - v[0], ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

std::pair<double, double> wilson(double k, double n, double z) {
  const double phat = k / n;
  const double a = 1.0 + z * z / n;
  const double b = -(2.0 * phat + z * z / n);
  const double cc = phat * phat;
  const double disc = std::sqrt(std::max(0.0, b * b - 4.0 * a * cc));
  return {std::max(0.0, (-b - disc) / (2.0 * a)), std::min(1.0, (-b + disc) / (2.0 * a))};
}

}  // namespace oracle

Check oracle_equivalence() {
  Check c;
  constexpr double kZ95 = 1.959963984540054;
  SplitMix64 rng(555);
  std::size_t comparisons = 0;
  for (std::uint64_t t = 0; t < 100; ++t) {
    const std::size_t docs = 1 + rng.below(8);
    const std::size_t segs = 1 + rng.below(6);
    const auto suite = build_passage_groups(
        parse_corpus(lenbias::testing::generated_tsv(docs, segs, "en-de", t, 1, 8), CorpusFormat::kTsv), {},
        TokenCounter::whitespace());
    ScorerSpec s;
    s.synthetic.alpha = 0.01 * static_cast<double>(rng.below(3));
    s.synthetic.sigma = 0.5;
    s.synthetic.seed = t;
    std::vector<std::vector<double>> scores;
    for (const auto& g : suite.groups) {
      std::vector<ScoreRequest> reqs;
      for (const auto& p : g.passages) reqs.push_back({passage_id(g, p.index), "", p.hypothesis_text, std::nullopt, ScoreMode::kQe});
      scores.emplace_back();
      for (const auto& r : score_batch(s, reqs)) scores.back().push_back(r.score);
    }
    const auto curve = delta_curve(suite.groups, scores);
    for (std::size_t i = 0; i < curve.points.size(); ++i, ++comparisons) {
      if (std::abs(curve.points[i].mean_delta - oracle::curve_point(scores, i)) > kOracleTol) c.fail("delta_curve differs");
    }
    const std::size_t last = std::min<std::size_t>(segs, 5);
    if (last >= 2) {
      std::size_t dec = 0;
      for (const auto& v : scores) dec += v[last - 1] < v[0];
      const double expected = static_cast<double>(dec) / static_cast<double>(scores.size());
      ++comparisons;
      if (std::abs(decreasing_trend_proportion(suite.groups, scores, 1, last).proportion - expected) > kOracleTol) {
        c.fail("trend proportion differs");
      }
    }

    const std::vector<Chunk> chunks =
        parse_jsonl(lenbias::testing::generated_chunks(5 + rng.below(30), t), chunk_from_json);
    const auto pairs = build_hypothesis_pairs(chunks, {1, 1000}, TokenCounter::whitespace()).pairs;
    std::unordered_map<std::string, PairScore> pair_scores;
    for (const auto& p : pairs) {
      const auto out = score_batch(s, {{p.chunk_id + "|s", "", p.shorter.text, std::nullopt, ScoreMode::kQe},
                                       {p.chunk_id + "|l", "", p.longer.text, std::nullopt, ScoreMode::kQe}});
      pair_scores[p.chunk_id] = {out[0].score, out[1].score};
    }
    for (const auto& bin : bin_pairs(pairs)) {
      const auto got = shorter_preference_rate(bin, pair_scores);
      double wins = 0.0;
      std::size_t n = 0;
      for (const auto& p : pairs) {
        const double sh = static_cast<double>(oracle::words(p.shorter.text));
        const double lg = static_cast<double>(oracle::words(p.longer.text));
        if ((lg - sh) / sh < bin.threshold) continue;
        ++n;
        const auto& ps = pair_scores.at(p.chunk_id);
        wins += ps.shorter > ps.longer ? 1.0 : ps.shorter == ps.longer ? 0.5 : 0.0;
      }
      ++comparisons;
      if (got.n_pairs != n) {
        c.fail("bin membership differs");
        continue;
      }
      if (n == 0) continue;
      if (std::abs(got.rate - wins / static_cast<double>(n)) > kOracleTol) c.fail("preference rate differs");
      const auto [lo, hi] = oracle::wilson(wins, static_cast<double>(n), kZ95);
      if (std::abs(got.ci_low - lo) > kOracleTol || std::abs(got.ci_high - hi) > kOracleTol) c.fail("wilson_ci differs");
    }
  }
  if (c.ok) c.detail = "100 corpora, " + std::to_string(comparisons) + " quantities within 1e-9";
  return c;
}

Check mqm_weighting() {
  Check c;
  SplitMix64 rng(31);
  for (int t = 0; t < 1000; ++t) {
    std::vector<MqmAnnotation> a;
    int minor = 0;
    int major = 0;
    const auto n = rng.below(50);
    for (std::uint64_t i = 0; i < n; ++i) {
      const bool is_major = rng.below(2) == 1;
      (is_major ? major : minor) += 1;
      a.push_back({0, 1, is_major ? Severity::kMajor : Severity::kMinor,
                   rng.below(2) ? Dimension::kAccuracy : Dimension::kFluency, ""});
    }
    if (mqm_score(a) != -static_cast<double>(minor) - 5.0 * static_cast<double>(major)) c.fail("mismatch");
  }
  if (c.ok) c.detail = "1000 random lists, exact";
  return c;
}

Check golden_tables() {
  Check c;
  const auto report = load_bias_report(lenbias::testing::fixture("reference_report.json"));
  TempDir dir;
  emit_tables(report, dir.path());
  const std::string trend = io::read_file(dir / "trend_MetricX-24_QE.csv");
  const std::string pref = io::read_file(dir / "preference_MetricX-24_QE_en-xx.csv");
  if (trend.find("\nAggregate,472,80.1\n") == std::string::npos) c.fail("trend row 'Aggregate,472,80.1' missing");
  if (pref.find("\nGerman (de_DE),55.4 (101),") == std::string::npos) c.fail("cell '55.4 (101)' missing");
  if (trend != io::read_file(lenbias::testing::fixture("golden/trend_MetricX-24_QE.csv"))) c.fail("trend CSV differs from golden");
  if (pref != io::read_file(lenbias::testing::fixture("golden/preference_MetricX-24_QE_en-xx.csv"))) {
    c.fail("preference CSV differs from golden");
  }
  if (c.ok) c.detail = "\"80.1\" n=472 and \"55.4 (101)\" byte-exact";
  return c;
}

Check protocol_robustness() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::string> payloads = {
      "\xE6\x97\xA5\xE6\x9C\xAC\xE8\xAA\x9E\xE3\x81\xAE\xE6\x96\x87",              // Japanese
      "\xD8\xA7\xD9\x84\xD8\xB9\xD8\xB1\xD8\xA8\xD9\x8A\xD8\xA9",                  // Arabic
      "\xF0\x9F\x91\xA9\xE2\x80\x8D\xF0\x9F\x92\xBB \xF0\x9F\x8E\x89",            // emoji, ZWJ
      "\xE4\xB8\xAD\xE6\x96\x87 \"quoted\" \\ back\tslash",
      "e\xCC\x81t\xC3\xA9 \xE3\x80\x80 mixed"};
  std::vector<ScoreRequest> reqs;
  std::vector<std::string> lines;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < 1000; ++i) {
    reqs.push_back({"req-" + std::to_string(i), "src", payloads[i % payloads.size()] + " #" + std::to_string(i),
                    std::nullopt, ScoreMode::kQe});
    lines.push_back(to_wire(reqs.back()));
    ids.push_back(reqs.back().id);
  }
  ScorerSpec spec;
  spec.name = "echo";
  spec.kind = ScorerKind::kExternalSubprocess;
  spec.command = lenbias::testing::fake_adapter("shuffle");
  spec.timeout = std::chrono::seconds(5);
  try {
    const auto out = score_batch(spec, reqs);
    for (std::size_t i = 0; i < reqs.size(); ++i) {
      if (out[i].id != reqs[i].id) c.fail("order not restored at " + std::to_string(i));
      if (out[i].score != -static_cast<double>(utf8::length(reqs[i].hypothesis)) / 1000.0) c.fail("wrong score");
    }
    const auto raw = exchange_lines(spec.command, lines, ids, spec.timeout);
    for (std::size_t i = 0; i < reqs.size(); ++i) {
      if (raw[i]["echo"].get<std::string>() != reqs[i].hypothesis) c.fail("payload corrupted at " + ids[i]);
    }
  } catch (const std::exception& e) {
    c.fail(std::string("unexpected error: ") + e.what());
  }

  spec.command = lenbias::testing::fake_adapter("crash 500");
  int errors = 0;
  std::string message;
  try {
    score_batch(spec, reqs);
  } catch (const ScorerError& e) {
    ++errors;
    message = e.what();
  } catch (const std::exception& e) {
    c.fail(std::string("crash raised a non-scorer error: ") + e.what());
  }
  if (errors != 1) c.fail("crash did not raise exactly one ScorerError");

  TempDir dir;
  const auto cli = lenbias::testing::run_cli(
      "audit --config " + lenbias::testing::shell_quote(std::string(LENBIAS_SAMPLES) + "/audit.json") + " --out-dir " +
      lenbias::testing::shell_quote(dir.path().string()) + " --adapter-cmd " +
      lenbias::testing::shell_quote(lenbias::testing::fake_adapter("crash 3")));
  if (cli.exit_code != 2) c.fail("CLI exit code " + std::to_string(cli.exit_code) + " on adapter crash");
  const double secs = seconds_since(t0);
  if (secs >= kProtocolSeconds) c.fail("took " + std::to_string(secs) + " s");
  if (c.ok) {
    char buf[300];
    std::snprintf(buf, sizeof buf, "1000 shuffled UTF-8 responses intact; crash -> \"%.80s\", CLI exit 2; %.2f s",
                  message.c_str(), secs);
    c.detail = buf;
  }
  return c;
}

Check perturbation_locality() {
  Check c;
  const auto groups = build_passage_groups(lenbias::testing::generated_corpus(20, 5, "en-de", 42), {},
                                           TokenCounter::whitespace())
                          .groups;
  if (groups.size() != 20) c.fail("fixture has " + std::to_string(groups.size()) + " groups");
  std::size_t checked = 0;
  for (const Severity sev : {Severity::kMinor, Severity::kMajor}) {
    for (const Dimension dim : {Dimension::kAccuracy, Dimension::kFluency}) {
      const PerturbationSpec spec{sev, dim, 7, Rule::kAuto};
      for (const auto& g : groups) {
        const auto out = apply_perturbation(g, spec);
        const std::string& old_first = g.passages[0].hypothesis_text;
        const std::string& new_first = out.perturbed.passages[0].hypothesis_text;
        if (new_first == old_first) c.fail("no edit in " + g.doc_id);
        for (std::size_t i = 0; i < g.passages.size(); ++i) {
          const auto& base = g.passages[i].hypothesis_text;
          const auto& pert = out.perturbed.passages[i].hypothesis_text;
          if (pert.compare(0, new_first.size(), new_first) != 0 ||
              pert.substr(new_first.size()) != base.substr(old_first.size())) {
            c.fail("suffix changed in " + g.doc_id + " p" + std::to_string(i + 1));
          }
          if (out.perturbed.passages[i].source_text != g.passages[i].source_text) c.fail("source changed");
        }
        if (out.gold_rating != (sev == Severity::kMinor ? -1.0 : -5.0)) c.fail("gold rating " + std::to_string(out.gold_rating));
        ++checked;
      }
    }
  }
  if (c.ok) c.detail = "4 specs x 20 groups = " + std::to_string(checked) + " perturbed groups, suffixes byte-identical";
  return c;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Check()>>> criteria = {
      {"synthetic_bias_detection", synthetic_bias_detection},
      {"null_calibration", null_calibration},
      {"density_round_trip", density_round_trip},
      {"normalization_efficacy", normalization_efficacy},
      {"oracle_equivalence", oracle_equivalence},
      {"mqm_weighting", mqm_weighting},
      {"golden_table_formats", golden_tables},
      {"protocol_robustness", protocol_robustness},
      {"perturbation_locality", perturbation_locality},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Check c;
    try {
      c = run();
    } catch (const std::exception& e) {
      c.fail(std::string("exception: ") + e.what());
    }
    std::printf("%s %s: %s\n", c.ok ? "PASS" : "FAIL", name, c.detail.c_str());
    std::fflush(stdout);
    failed += c.ok ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
