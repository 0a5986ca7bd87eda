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
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <future>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lenbias/bias_stats.hpp"
#include "lenbias/corpus.hpp"
#include "lenbias/error.hpp"
#include "lenbias/io.hpp"
#include "lenbias/normalize.hpp"
#include "lenbias/perturb.hpp"
#include "lenbias/rng.hpp"
#include "lenbias/scorer_gateway.hpp"
#include "lenbias/suite_builder.hpp"

namespace lenbias {

inline constexpr const char* kAggregateLabel = "Aggregate";

// ---------------------------------------------------------------------------
// Configuration

struct CorpusInput {
  std::filesystem::path path;
  CorpusFormat format = CorpusFormat::kTsv;
  std::string label;  // display name for the corpus language; defaults to lang_pair
};

struct ChunkInput {
  std::filesystem::path path;
  std::string language;
  std::string direction;  // e.g. "en-xx" or "xx-en"
};

struct ScorerEntry {
  ScorerSpec spec;
  ScoreMode mode = ScoreMode::kQe;
};

struct HistogramOptions {
  double bin_width = 1.0;
  double lo = -25.0;
  double hi = 0.0;
  double density_bin_width = 0.01;
  double density_lo = -0.25;
  double density_hi = 0.0;
};

struct PerturbationAdapter {
  std::string command;
  std::chrono::milliseconds timeout{std::chrono::seconds(120)};
};

struct AuditConfig {
  std::vector<CorpusInput> corpora;
  std::vector<ChunkInput> chunks;
  TokenCounter counter = TokenCounter::whitespace();
  PassageOptions passage;
  PairOptions pairs;
  std::vector<double> thresholds = default_thresholds();
  std::size_t trend_first = 1;
  std::size_t trend_last = 5;
  std::vector<ScorerEntry> scorers;
  std::vector<PerturbationSpec> perturbations;
  std::optional<PerturbationAdapter> perturbation_adapter;
  std::filesystem::path out_dir = "lenbias-out";
  std::uint64_t seed = 0;
  HistogramOptions histogram;
  double ci_level = 0.95;
};

namespace detail {

inline std::filesystem::path resolve_path(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path.lexically_normal();
}

inline std::chrono::milliseconds timeout_from_secs(const nlohmann::json& v) {
  const double t = v.get<double>();
  if (!(t > 0)) throw ConfigError("timeout_secs must be > 0");
  return std::chrono::milliseconds(static_cast<long long>(t * 1000.0));
}

}  // namespace detail

inline void validate_config(const AuditConfig& c) {
  if (c.corpora.empty() && c.chunks.empty()) throw ConfigError("config lists no corpora and no chunks");
  for (const auto& in : c.corpora) {
    if (!std::filesystem::is_regular_file(in.path)) {
      throw ConfigError("corpus file not found: " + in.path.string());
    }
  }
  for (const auto& in : c.chunks) {
    if (!std::filesystem::is_regular_file(in.path)) {
      throw ConfigError("chunk file not found: " + in.path.string());
    }
    if (in.language.empty() || in.direction.empty()) {
      throw ConfigError("chunk entry " + in.path.string() + " needs 'language' and 'direction'");
    }
  }
  if (c.scorers.empty()) throw ConfigError("config lists no scorers");
  std::set<std::string> names;
  for (const auto& s : c.scorers) {
    if (!names.insert(s.spec.name).second) throw ConfigError("duplicate scorer name '" + s.spec.name + "'");
    if (s.spec.kind == ScorerKind::kLexicalOverlap && s.mode == ScoreMode::kQe) {
      throw ConfigError("scorer " + s.spec.name + ": lexical_overlap needs mode ref or hybrid");
    }
  }
  if (c.passage.max_segments < 1) throw ConfigError("max_segments must be >= 1");
  if (c.passage.window_tokens < 1) throw ConfigError("window_tokens must be >= 1");
  if (c.pairs.min_tokens > c.pairs.max_tokens) throw ConfigError("min_chunk_tokens exceeds max_chunk_tokens");
  validate_thresholds(c.thresholds);
  if (c.thresholds.empty()) throw ConfigError("thresholds must not be empty");
  if (c.trend_first < 1 || c.trend_last <= c.trend_first) {
    throw ConfigError("trend indices must satisfy 1 <= first < last");
  }
  if (!(c.ci_level > 0 && c.ci_level < 1)) throw ConfigError("ci_level must lie in (0, 1)");
  const auto& h = c.histogram;
  if (!(h.bin_width > 0) || !(h.lo < h.hi) || !(h.density_bin_width > 0) || !(h.density_lo < h.density_hi)) {
    throw ConfigError("histogram needs positive bin widths and lo < hi");
  }
}

// Relative paths in the document resolve against `base_dir`.
inline AuditConfig audit_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  AuditConfig c;
  try {
    c.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("out_dir")) c.out_dir = detail::resolve_path(base_dir, j["out_dir"].get<std::string>());
    if (j.contains("counter")) c.counter = TokenCounter::from_json(j["counter"]);
    for (const auto& e : j.value("corpora", nlohmann::json::array())) {
      CorpusInput in;
      in.path = detail::resolve_path(base_dir, e.at("path").get<std::string>());
      in.format = e.contains("format") ? corpus_format_from_string(e["format"].get<std::string>())
                                       : corpus_format_from_path(in.path);
      in.label = e.value("label", std::string{});
      c.corpora.push_back(std::move(in));
    }
    for (const auto& e : j.value("chunks", nlohmann::json::array())) {
      c.chunks.push_back({detail::resolve_path(base_dir, e.at("path").get<std::string>()),
                          e.value("language", std::string{}), e.value("direction", std::string{})});
    }
    const nlohmann::json suite = j.value("suite", nlohmann::json::object());
    c.passage.max_segments = suite.value("max_segments", c.passage.max_segments);
    c.passage.window_tokens = suite.value("window_tokens", c.passage.window_tokens);
    c.passage.separator = suite.value("separator", c.passage.separator);
    c.pairs.min_tokens = suite.value("min_chunk_tokens", c.pairs.min_tokens);
    c.pairs.max_tokens = suite.value("max_chunk_tokens", c.pairs.max_tokens);
    if (suite.contains("thresholds")) c.thresholds = suite["thresholds"].get<std::vector<double>>();
    c.trend_first = suite.value("trend_first", c.trend_first);
    c.trend_last = suite.value("trend_last", c.trend_last);
    for (const auto& e : j.value("scorers", nlohmann::json::array())) {
      ScorerEntry entry;
      entry.spec = scorer_spec_from_json(e, c.seed);
      if (!e.contains("params") || !e["params"].contains("counter")) entry.spec.counter = c.counter;
      entry.mode = score_mode_from_string(e.value("mode", std::string("qe")));
      c.scorers.push_back(std::move(entry));
    }
    for (const auto& e : j.value("perturbations", nlohmann::json::array())) {
      PerturbationSpec spec;
      spec.severity = severity_from_string(e.at("severity").get<std::string>());
      spec.dimension = dimension_from_string(e.at("dimension").get<std::string>());
      spec.rule = rule_from_string(e.value("rule", std::string("auto")));
      spec.seed = e.value("seed", c.seed);
      c.perturbations.push_back(spec);
    }
    if (j.contains("perturbation_adapter") && !j["perturbation_adapter"].is_null()) {
      const auto& a = j["perturbation_adapter"];
      PerturbationAdapter adapter;
      adapter.command = a.at("command").get<std::string>();
      if (a.contains("timeout_secs")) adapter.timeout = detail::timeout_from_secs(a["timeout_secs"]);
      c.perturbation_adapter = adapter;
    }
    const nlohmann::json h = j.value("histogram", nlohmann::json::object());
    c.histogram.bin_width = h.value("bin_width", c.histogram.bin_width);
    c.histogram.lo = h.value("lo", c.histogram.lo);
    c.histogram.hi = h.value("hi", c.histogram.hi);
    c.histogram.density_bin_width = h.value("density_bin_width", c.histogram.density_bin_width);
    c.histogram.density_lo = h.value("density_lo", c.histogram.density_lo);
    c.histogram.density_hi = h.value("density_hi", c.histogram.density_hi);
    c.ci_level = j.value("ci_level", c.ci_level);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  validate_config(c);
  return c;
}

inline nlohmann::json read_config_json(const std::filesystem::path& path) {
  const std::string text = io::read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

inline AuditConfig load_audit_config(const std::filesystem::path& path) {
  return audit_config_from_json(read_config_json(path), path.parent_path());
}

// Canonical form used for the digest. The output directory is excluded:
// it does not influence any number in the report.
inline nlohmann::ordered_json to_json(const AuditConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["counter"] = nlohmann::ordered_json(c.counter.to_json());
  j["corpora"] = nlohmann::ordered_json::array();
  for (const auto& in : c.corpora) {
    j["corpora"].push_back({{"path", in.path.generic_string()},
                            {"format", in.format == CorpusFormat::kTsv ? "tsv" : "jsonl"},
                            {"label", in.label}});
  }
  j["chunks"] = nlohmann::ordered_json::array();
  for (const auto& in : c.chunks) {
    j["chunks"].push_back(
        {{"path", in.path.generic_string()}, {"language", in.language}, {"direction", in.direction}});
  }
  nlohmann::ordered_json suite;
  suite["max_segments"] = c.passage.max_segments;
  suite["window_tokens"] = c.passage.window_tokens;
  suite["separator"] = c.passage.separator;
  suite["min_chunk_tokens"] = c.pairs.min_tokens;
  suite["max_chunk_tokens"] = c.pairs.max_tokens;
  suite["thresholds"] = c.thresholds;
  suite["trend_first"] = c.trend_first;
  suite["trend_last"] = c.trend_last;
  j["suite"] = std::move(suite);
  j["scorers"] = nlohmann::ordered_json::array();
  for (const auto& s : c.scorers) {
    auto sj = to_json(s.spec);
    sj["mode"] = to_string(s.mode);
    j["scorers"].push_back(std::move(sj));
  }
  j["perturbations"] = nlohmann::ordered_json::array();
  for (const auto& p : c.perturbations) {
    j["perturbations"].push_back({{"severity", to_string(p.severity)},
                                  {"dimension", to_string(p.dimension)},
                                  {"rule", to_string(p.rule)},
                                  {"seed", p.seed}});
  }
  if (c.perturbation_adapter) {
    j["perturbation_adapter"] = {
        {"command", c.perturbation_adapter->command},
        {"timeout_secs", static_cast<double>(c.perturbation_adapter->timeout.count()) / 1000.0}};
  }
  j["histogram"] = {{"bin_width", c.histogram.bin_width},
                    {"lo", c.histogram.lo},
                    {"hi", c.histogram.hi},
                    {"density_bin_width", c.histogram.density_bin_width},
                    {"density_lo", c.histogram.density_lo},
                    {"density_hi", c.histogram.density_hi}};
  j["ci_level"] = c.ci_level;
  return j;
}

inline std::string config_digest(const AuditConfig& c) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx",
                static_cast<unsigned long long>(fnv1a64(to_json(c).dump())));
  return buf;
}

// ---------------------------------------------------------------------------
// Stage data

struct PairSet {
  std::string language;
  std::string direction;
  PairSuite suite;
};

struct AuditInputs {
  std::vector<PassageGroup> groups;
  std::size_t discarded = 0;
  std::map<std::string, std::string> language_labels;  // lang_pair -> display label
  std::vector<PerturbedGroup> perturbed;
  std::map<std::string, std::size_t> perturbation_skipped;  // category -> groups without an applicable rule
  std::vector<PairSet> pair_sets;
};

inline std::vector<Corpus> ingest_corpora(const AuditConfig& c) {
  std::vector<Corpus> out;
  for (const auto& in : c.corpora) out.push_back(load_corpus(in.path, in.format));
  return out;
}

inline std::map<std::string, std::string> language_labels(const AuditConfig& c, const std::vector<Corpus>& corpora) {
  std::map<std::string, std::string> labels;
  for (std::size_t i = 0; i < corpora.size(); ++i) {
    const std::string& label = c.corpora[i].label.empty() ? corpora[i].lang_pair : c.corpora[i].label;
    const auto [it, inserted] = labels.emplace(corpora[i].lang_pair, label);
    if (!inserted && it->second != label) {
      throw ConfigError("language pair " + corpora[i].lang_pair + " has conflicting labels");
    }
  }
  return labels;
}

inline void build_suites(const AuditConfig& c, const std::vector<Corpus>& corpora, AuditInputs& in) {
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& corpus : corpora) {
    auto suite = build_passage_groups(corpus, c.passage, c.counter);
    in.discarded += suite.discarded;
    for (auto& g : suite.groups) {
      if (!seen.emplace(g.lang_pair, g.doc_id).second) {
        throw DataError("document " + g.doc_id + " (" + g.lang_pair + ") appears in more than one corpus");
      }
      in.groups.push_back(std::move(g));
    }
  }
  in.language_labels = language_labels(c, corpora);
  std::stable_sort(in.groups.begin(), in.groups.end(), [](const PassageGroup& a, const PassageGroup& b) {
    return std::tie(a.lang_pair, a.doc_id) < std::tie(b.lang_pair, b.doc_id);
  });
  for (const auto& chunk_in : c.chunks) {
    in.pair_sets.push_back({chunk_in.language, chunk_in.direction,
                            build_hypothesis_pairs(load_chunks(chunk_in.path), c.pairs, c.counter)});
  }
}

inline void build_perturbations(const AuditConfig& c, AuditInputs& in) {
  for (const auto& spec : c.perturbations) {
    if (c.perturbation_adapter) {
      auto out = external_perturb(c.perturbation_adapter->command, std::span<const PassageGroup>(in.groups), spec,
                                  c.counter, c.perturbation_adapter->timeout);
      for (auto& g : out) in.perturbed.push_back(std::move(g));
      continue;
    }
    std::size_t& skipped = in.perturbation_skipped[spec.category()];
    for (const auto& g : in.groups) {
      try {
        in.perturbed.push_back(apply_perturbation(g, spec, c.counter));
      } catch (const RuleNotApplicable&) {
        ++skipped;
      }
    }
  }
}

inline AuditInputs prepare_inputs(const AuditConfig& c) {
  AuditInputs in;
  build_suites(c, ingest_corpora(c), in);
  build_perturbations(c, in);
  return in;
}

// ---------------------------------------------------------------------------
// Requests. Ids: "<lang_pair>|<doc_id>|p<i>" for passages,
// "<lang_pair>|<doc_id>|<category>|p<i>" for perturbed passages and
// "<direction>|<language>|<chunk_id>|short" / "|long" for pair members.

inline std::string passage_id(const PassageGroup& g, std::size_t index) {
  return g.lang_pair + "|" + g.doc_id + "|p" + std::to_string(index);
}

inline std::string perturbed_id(const PerturbedGroup& g, std::size_t index) {
  return g.base.lang_pair + "|" + g.base.doc_id + "|" + g.spec.category() + "|p" + std::to_string(index);
}

inline std::string pair_member_id(const PairSet& set, const HypothesisPair& p, bool shorter) {
  return set.direction + "|" + set.language + "|" + p.chunk_id + (shorter ? "|short" : "|long");
}

inline std::vector<ScoreRequest> build_requests(const AuditInputs& in, ScoreMode mode) {
  const bool with_ref = mode != ScoreMode::kQe;
  std::vector<ScoreRequest> out;
  for (const auto& g : in.groups) {
    for (const auto& p : g.passages) {
      out.push_back({passage_id(g, p.index), p.source_text, p.hypothesis_text,
                     with_ref ? std::optional<std::string>(p.hypothesis_text) : std::nullopt, mode});
    }
  }
  for (const auto& g : in.perturbed) {
    for (std::size_t i = 0; i < g.perturbed.passages.size(); ++i) {
      const auto& p = g.perturbed.passages[i];
      out.push_back({perturbed_id(g, p.index), p.source_text, p.hypothesis_text,
                     with_ref ? std::optional<std::string>(g.base.passages[i].hypothesis_text) : std::nullopt,
                     mode});
    }
  }
  for (const auto& set : in.pair_sets) {
    for (const auto& p : set.suite.pairs) {
      const auto ref = with_ref ? std::optional<std::string>(p.reference_text) : std::nullopt;
      out.push_back({pair_member_id(set, p, true), p.source_text, p.shorter.text, ref, mode});
      out.push_back({pair_member_id(set, p, false), p.source_text, p.longer.text, ref, mode});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scoring

struct ScorerOutcome {
  std::string name;
  nlohmann::ordered_json identity;
  ScoreMode mode = ScoreMode::kQe;
  Orientation orientation = Orientation::kHigherBetter;
  std::optional<std::string> error;  // set when the scorer failed
  std::vector<ScoreResponse> responses;
};

inline nlohmann::ordered_json scorer_identity(const ScorerEntry& e) {
  auto j = to_json(e.spec);
  j["mode"] = to_string(e.mode);
  return j;
}

inline ScorerOutcome score_with(const ScorerEntry& entry, const AuditInputs& in) {
  ScorerOutcome out;
  out.name = entry.spec.name;
  out.identity = scorer_identity(entry);
  out.mode = entry.mode;
  out.orientation = entry.spec.orientation;
  try {
    out.responses = score_batch(entry.spec, build_requests(in, entry.mode));
  } catch (const Error& e) {
    out.error = e.what();
  }
  return out;
}

// Each scorer's batch runs on its own thread; results keep config order.
inline std::vector<ScorerOutcome> score_all(const AuditConfig& c, const AuditInputs& in) {
  std::vector<std::future<ScorerOutcome>> futures;
  for (const auto& entry : c.scorers) {
    futures.push_back(std::async(std::launch::async, [&entry, &in] { return score_with(entry, in); }));
  }
  std::vector<ScorerOutcome> out;
  for (auto& f : futures) out.push_back(f.get());
  return out;
}

inline nlohmann::ordered_json to_json(const ScorerOutcome& o) {
  nlohmann::ordered_json j;
  j["scorer"] = o.identity;
  j["status"] = o.error ? "failed" : "ok";
  if (o.error) j["error"] = *o.error;
  j["responses"] = nlohmann::ordered_json::array();
  for (const auto& r : o.responses) j["responses"].push_back(to_wire_json(r));
  return j;
}

inline ScorerOutcome scorer_outcome_from_json(const nlohmann::json& j) {
  ScorerOutcome o;
  try {
    o.identity = j.at("scorer");
    o.name = j.at("scorer").at("name").get<std::string>();
    o.mode = score_mode_from_string(j.at("scorer").value("mode", std::string("qe")));
    o.orientation = orientation_from_string(j.at("scorer").value("orientation", std::string("higher_better")));
    if (j.value("status", std::string("ok")) != "ok") o.error = j.value("error", std::string("failed"));
    for (const auto& r : j.at("responses")) o.responses.push_back(score_response_from_wire(r));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed score file: ") + e.what());
  }
  return o;
}

// ---------------------------------------------------------------------------
// Report

struct SeriesResult {
  std::string language;
  std::size_t n_groups = 0;
  DeltaCurve curve;  // display orientation
  TrendResult trend;
  std::optional<double> slope;
  std::vector<double> mean_gap;  // perturbation sections: mean(perturbed - base) per index
};

struct PerturbationSection {
  std::string category;
  double gold_rating = 0.0;
  std::size_t n_groups = 0;
  std::size_t n_skipped = 0;
  std::vector<SeriesResult> series;
};

struct PreferenceRow {
  std::string language;
  std::vector<PreferenceResult> cells;
};

struct PreferenceTable {
  std::string direction;
  std::vector<double> thresholds;
  std::vector<PreferenceRow> rows;
};

struct ScorerSection {
  std::string name;
  nlohmann::ordered_json identity;
  std::string status = "ok";
  std::string error;
  std::vector<SeriesResult> series;  // languages in label order, Aggregate last
  std::vector<PerturbationSection> perturbations;
  std::vector<PreferenceTable> preference;
  std::optional<Histogram> raw_histogram;
  std::optional<Histogram> density_histogram;
  std::optional<BiasEstimate> passage_bias;     // theta = 0: gold passages carry no errors
  std::optional<BiasEstimate> preference_bias;  // theta = 0.5 over per-pair credit

  bool ok() const { return status == "ok"; }
};

struct BiasReport {
  nlohmann::ordered_json metadata;
  std::vector<ScorerSection> scorers;
};

namespace detail {

struct Scored {
  double value = 0.0;  // orientation-normalized, higher is better
  double raw = 0.0;
  bool is_density = false;
};

using ScoreTable = std::unordered_map<std::string, Scored>;

inline ScoreTable index_scores(const ScorerOutcome& o) {
  ScoreTable t;
  for (const auto& r : o.responses) t[r.id] = {orient(r.score, o.orientation), r.score, r.is_density};
  return t;
}

inline double lookup(const ScoreTable& t, const std::string& id) {
  const auto it = t.find(id);
  if (it == t.end()) throw DataError("missing score for request " + id);
  return it->second.value;
}

inline std::vector<double> group_scores(const ScoreTable& t, const PassageGroup& g) {
  std::vector<double> s;
  for (const auto& p : g.passages) s.push_back(lookup(t, passage_id(g, p.index)));
  return s;
}

inline std::vector<double> perturbed_scores(const ScoreTable& t, const PerturbedGroup& g) {
  std::vector<double> s;
  for (const auto& p : g.perturbed.passages) s.push_back(lookup(t, perturbed_id(g, p.index)));
  return s;
}

inline SeriesResult make_series(const std::string& language, const std::vector<PassageGroup>& groups,
                                const std::vector<std::vector<double>>& scores, Orientation o,
                                const AuditConfig& c) {
  SeriesResult s;
  s.language = language;
  s.n_groups = groups.size();
  s.curve = delta_curve(groups, scores);
  for (auto& p : s.curve.points) p.mean_delta = orient(p.mean_delta, o) + 0.0;
  s.trend = decreasing_trend_proportion(groups, scores, c.trend_first, c.trend_last);
  if (s.curve.points.size() >= 2) s.slope = slope_of_score_changes(s.curve);
  return s;
}

// Splits groups by display label and appends an Aggregate series.
inline std::vector<SeriesResult> series_by_language(const std::vector<PassageGroup>& groups,
                                                    const std::vector<std::vector<double>>& scores,
                                                    const std::map<std::string, std::string>& labels,
                                                    Orientation o, const AuditConfig& c) {
  std::map<std::string, std::pair<std::vector<PassageGroup>, std::vector<std::vector<double>>>> by;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto it = labels.find(groups[i].lang_pair);
    auto& bucket = by[it == labels.end() ? groups[i].lang_pair : it->second];
    bucket.first.push_back(groups[i]);
    bucket.second.push_back(scores[i]);
  }
  std::vector<SeriesResult> out;
  for (const auto& [label, bucket] : by) out.push_back(make_series(label, bucket.first, bucket.second, o, c));
  if (!groups.empty()) out.push_back(make_series(kAggregateLabel, groups, scores, o, c));
  return out;
}

inline ScorerSection analyze_scorer(const AuditConfig& c, const AuditInputs& in, const ScorerOutcome& o) {
  ScorerSection sec;
  sec.name = o.name;
  sec.identity = o.identity;
  if (o.error) {
    sec.status = "failed";
    sec.error = *o.error;
    return sec;
  }
  const ScoreTable table = index_scores(o);

  std::vector<std::vector<double>> base_scores;
  for (const auto& g : in.groups) base_scores.push_back(group_scores(table, g));
  sec.series = series_by_language(in.groups, base_scores, in.language_labels, o.orientation, c);

  std::map<std::string, std::size_t> base_index;
  for (std::size_t i = 0; i < in.groups.size(); ++i) {
    base_index[in.groups[i].lang_pair + '\x1f' + in.groups[i].doc_id] = i;
  }
  for (const auto& spec : c.perturbations) {
    PerturbationSection ps;
    ps.category = spec.category();
    ps.gold_rating = mqm_penalty(spec.severity);
    if (const auto it = in.perturbation_skipped.find(ps.category); it != in.perturbation_skipped.end()) {
      ps.n_skipped = it->second;
    }
    std::vector<PassageGroup> groups;
    std::vector<std::vector<double>> scores;
    std::vector<std::vector<double>> gaps;
    for (const auto& g : in.perturbed) {
      if (!(g.spec == spec)) continue;
      groups.push_back(g.perturbed);
      scores.push_back(perturbed_scores(table, g));
      const auto& base = base_scores.at(base_index.at(g.base.lang_pair + '\x1f' + g.base.doc_id));
      std::vector<double> gap;
      for (std::size_t i = 0; i < scores.back().size(); ++i) gap.push_back(scores.back()[i] - base[i]);
      gaps.push_back(std::move(gap));
    }
    ps.n_groups = groups.size();
    ps.series = series_by_language(groups, scores, in.language_labels, o.orientation, c);
    for (auto& s : ps.series) {
      std::vector<double> sum;
      std::vector<std::size_t> n;
      for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto it = in.language_labels.find(groups[g].lang_pair);
        const std::string label = it == in.language_labels.end() ? groups[g].lang_pair : it->second;
        if (s.language != kAggregateLabel && s.language != label) continue;
        for (std::size_t i = 0; i < gaps[g].size(); ++i) {
          if (sum.size() <= i) sum.resize(i + 1, 0.0), n.resize(i + 1, 0);
          sum[i] += gaps[g][i];
          ++n[i];
        }
      }
      for (std::size_t i = 0; i < sum.size(); ++i) {
        s.mean_gap.push_back(orient(sum[i] / static_cast<double>(n[i]), o.orientation) + 0.0);
      }
    }
    sec.perturbations.push_back(std::move(ps));
  }

  std::vector<double> credits;
  std::map<std::string, std::vector<const PairSet*>> by_direction;
  for (const auto& set : in.pair_sets) by_direction[set.direction].push_back(&set);
  for (const auto& [direction, sets] : by_direction) {
    PreferenceTable t;
    t.direction = direction;
    t.thresholds = c.thresholds;
    std::map<std::string, std::vector<HypothesisPair>> by_language;
    std::unordered_map<std::string, PairScore> pair_scores;
    std::vector<HypothesisPair> all;
    for (const PairSet* set : sets) {
      for (const auto& p : set->suite.pairs) {
        // Keys are unique per (language, chunk) within a direction.
        HypothesisPair keyed = p;
        keyed.chunk_id = set->language + '\x1f' + p.chunk_id;
        const PairScore ps{lookup(table, pair_member_id(*set, p, true)), lookup(table, pair_member_id(*set, p, false))};
        pair_scores[keyed.chunk_id] = ps;
        credits.push_back(preference_credit(ps));
        by_language[set->language].push_back(keyed);
        all.push_back(std::move(keyed));
      }
    }
    const auto row_for = [&](const std::string& label, const std::vector<HypothesisPair>& pairs) {
      PreferenceRow row{label, {}};
      for (const auto& bin : bin_pairs(pairs, c.thresholds)) {
        row.cells.push_back(shorter_preference_rate(bin, pair_scores, c.ci_level));
      }
      return row;
    };
    for (const auto& [language, pairs] : by_language) t.rows.push_back(row_for(language, pairs));
    t.rows.push_back(row_for(kAggregateLabel, all));
    sec.preference.push_back(std::move(t));
  }

  std::vector<double> raw;
  std::vector<double> density;
  std::vector<double> passage_predictions;
  for (const auto& g : in.groups) {
    for (const auto& p : g.passages) {
      const std::string id = passage_id(g, p.index);
      const Scored& s = table.at(id);
      const std::size_t len = p.hypothesis_tokens;
      if (len == 0) continue;
      const double r = s.is_density ? from_density(s.raw, len) : s.raw;
      raw.push_back(r);
      density.push_back(s.is_density ? s.raw : to_density(s.raw, len));
      passage_predictions.push_back(r);
    }
  }
  sec.raw_histogram = score_histogram(raw, c.histogram.bin_width, c.histogram.lo, c.histogram.hi);
  sec.density_histogram =
      score_histogram(density, c.histogram.density_bin_width, c.histogram.density_lo, c.histogram.density_hi);
  if (!passage_predictions.empty()) sec.passage_bias = bias_estimate(passage_predictions, 0.0);
  if (!credits.empty()) sec.preference_bias = bias_estimate(credits, 0.5);
  return sec;
}

}  // namespace detail

inline nlohmann::ordered_json report_metadata(const AuditConfig& c, const AuditInputs& in,
                                              const std::vector<ScorerOutcome>& outcomes) {
  nlohmann::ordered_json m;
  m["tool"] = "lenbias";
  m["report_version"] = 1;
  m["config_digest"] = config_digest(c);
  m["seed"] = c.seed;
  m["scorers"] = nlohmann::ordered_json::array();
  for (const auto& o : outcomes) m["scorers"].push_back(o.identity);
  m["length_unit"] = c.counter.unit();
  m["counter"] = nlohmann::ordered_json(c.counter.to_json());
  m["rel_diff_convention"] = "(longer - shorter) / shorter, lengths in " + c.counter.unit();
  m["tie_rule"] = "a tied pair counts 0.5 toward the shorter member";
  m["trend_rule"] = "decreasing iff score(p" + std::to_string(c.trend_last) + ") < score(p" +
                    std::to_string(c.trend_first) + "), strictly";
  m["document_weighting"] = "documents weighted equally";
  m["orientation"] = "statistics use higher-is-better scores; curves are shown in each scorer's own orientation";
  m["ci"] = {{"method", "wilson"}, {"level", c.ci_level}};
  m["rounding"] = "half-even; percentages to 1 decimal, scores to 2 decimals";
  m["bin_rule"] = "a pair belongs to threshold t iff rel_diff >= t";
  m["histogram"] = {{"raw", {{"bin_width", c.histogram.bin_width}, {"lo", c.histogram.lo}, {"hi", c.histogram.hi}}},
                    {"density",
                     {{"bin_width", c.histogram.density_bin_width},
                      {"lo", c.histogram.density_lo},
                      {"hi", c.histogram.density_hi}}},
                    {"top_edge", "closed"}};
  std::size_t n_pairs = 0;
  std::size_t dropped = 0;
  for (const auto& s : in.pair_sets) n_pairs += s.suite.pairs.size(), dropped += s.suite.dropped;
  m["suite"] = {{"passage_groups", in.groups.size()},
                {"discarded_groups", in.discarded},
                {"max_segments", c.passage.max_segments},
                {"window_tokens", c.passage.window_tokens},
                {"hypothesis_pairs", n_pairs},
                {"dropped_chunks", dropped},
                {"perturbed_groups", in.perturbed.size()}};
  return m;
}

// Builds the report from scored stage data. Throws ScorerError when every
// scorer failed.
inline BiasReport analyze(const AuditConfig& c, const AuditInputs& in, const std::vector<ScorerOutcome>& outcomes) {
  BiasReport report;
  report.metadata = report_metadata(c, in, outcomes);
  bool any_ok = false;
  std::string errors;
  for (const auto& o : outcomes) {
    report.scorers.push_back(detail::analyze_scorer(c, in, o));
    if (o.error) {
      errors += (errors.empty() ? "" : "; ") + o.name + ": " + *o.error;
    } else {
      any_ok = true;
    }
  }
  if (!any_ok) throw ScorerError("all scorers failed: " + errors);
  return report;
}

inline BiasReport run_audit(const AuditConfig& c) {
  validate_config(c);
  const AuditInputs in = prepare_inputs(c);
  return analyze(c, in, score_all(c, in));
}

// ---------------------------------------------------------------------------
// Report JSON

namespace detail {

inline nlohmann::ordered_json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

inline nlohmann::ordered_json to_json(const SeriesResult& s) {
  nlohmann::ordered_json j;
  j["language"] = s.language;
  j["n_groups"] = s.n_groups;
  j["curve"] = nlohmann::ordered_json::array();
  for (const auto& p : s.curve.points) {
    j["curve"].push_back({{"index", p.index}, {"mean_delta", p.mean_delta}, {"stddev", p.stddev}, {"n", p.n}});
  }
  j["trend"] = {{"n_docs", s.trend.n_docs},
                {"n_decreasing", s.trend.n_decreasing},
                {"n_skipped", s.trend.n_skipped},
                {"proportion", s.trend.proportion}};
  j["slope"] = optional_number(s.slope);
  if (!s.mean_gap.empty()) j["mean_gap"] = s.mean_gap;
  return j;
}

inline SeriesResult series_from_json(const nlohmann::json& j) {
  SeriesResult s;
  s.language = j.at("language").get<std::string>();
  s.n_groups = j.value("n_groups", std::size_t{0});
  for (const auto& p : j.value("curve", nlohmann::json::array())) {
    s.curve.points.push_back({p.at("index").get<std::size_t>(), p.at("mean_delta").get<double>(),
                              p.value("stddev", 0.0), p.value("n", std::size_t{0})});
  }
  const auto& t = j.at("trend");
  s.trend.n_docs = t.at("n_docs").get<std::size_t>();
  s.trend.n_decreasing = t.at("n_decreasing").get<std::size_t>();
  s.trend.n_skipped = t.value("n_skipped", std::size_t{0});
  s.trend.proportion = t.contains("proportion") ? t["proportion"].get<double>()
                       : s.trend.n_docs == 0    ? 0.0
                                                : static_cast<double>(s.trend.n_decreasing) /
                                                   static_cast<double>(s.trend.n_docs);
  if (j.contains("slope") && !j["slope"].is_null()) s.slope = j["slope"].get<double>();
  if (j.contains("mean_gap")) s.mean_gap = j["mean_gap"].get<std::vector<double>>();
  return s;
}

inline nlohmann::ordered_json to_json(const PreferenceResult& r) {
  return {{"threshold", r.threshold}, {"n_pairs", r.n_pairs}, {"shorter_wins", r.shorter_wins},
          {"rate", r.rate},           {"ci_low", r.ci_low},   {"ci_high", r.ci_high}};
}

inline PreferenceResult preference_from_json(const nlohmann::json& j) {
  PreferenceResult r;
  r.threshold = j.at("threshold").get<double>();
  r.n_pairs = j.at("n_pairs").get<std::size_t>();
  r.shorter_wins = j.at("shorter_wins").get<double>();
  r.rate = j.contains("rate") ? j["rate"].get<double>()
           : r.n_pairs == 0   ? 0.0
                              : r.shorter_wins / static_cast<double>(r.n_pairs);
  r.ci_low = j.value("ci_low", 0.0);
  r.ci_high = j.value("ci_high", 1.0);
  return r;
}

inline nlohmann::ordered_json to_json(const Histogram& h) {
  return {{"lo", h.lo},     {"hi", h.hi},   {"width", h.width}, {"counts", h.counts},
          {"underflow", h.underflow}, {"overflow", h.overflow}};
}

inline Histogram histogram_from_json(const nlohmann::json& j) {
  Histogram h;
  h.lo = j.at("lo").get<double>();
  h.hi = j.at("hi").get<double>();
  h.width = j.at("width").get<double>();
  h.counts = j.at("counts").get<std::vector<std::size_t>>();
  h.underflow = j.value("underflow", std::size_t{0});
  h.overflow = j.value("overflow", std::size_t{0});
  return h;
}

inline nlohmann::ordered_json to_json(const BiasEstimate& b) {
  return {{"true_quality", b.true_quality}, {"mean_prediction", b.mean_prediction}, {"bias", b.bias}, {"n", b.n}};
}

inline BiasEstimate bias_from_json(const nlohmann::json& j) {
  BiasEstimate b;
  b.true_quality = j.at("true_quality").get<double>();
  b.mean_prediction = j.at("mean_prediction").get<double>();
  b.bias = j.at("bias").get<double>();
  b.n = j.value("n", std::size_t{0});
  return b;
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const BiasReport& r) {
  nlohmann::ordered_json j;
  j["metadata"] = r.metadata;
  j["scorers"] = nlohmann::ordered_json::array();
  for (const auto& s : r.scorers) {
    nlohmann::ordered_json sj;
    sj["name"] = s.name;
    sj["identity"] = s.identity;
    sj["status"] = s.status;
    if (!s.ok()) {
      sj["error"] = s.error;
      j["scorers"].push_back(std::move(sj));
      continue;
    }
    sj["series"] = nlohmann::ordered_json::array();
    for (const auto& x : s.series) sj["series"].push_back(detail::to_json(x));
    sj["perturbations"] = nlohmann::ordered_json::array();
    for (const auto& p : s.perturbations) {
      nlohmann::ordered_json pj;
      pj["category"] = p.category;
      pj["gold_rating"] = p.gold_rating;
      pj["n_groups"] = p.n_groups;
      pj["n_skipped"] = p.n_skipped;
      pj["series"] = nlohmann::ordered_json::array();
      for (const auto& x : p.series) pj["series"].push_back(detail::to_json(x));
      sj["perturbations"].push_back(std::move(pj));
    }
    sj["preference"] = nlohmann::ordered_json::array();
    for (const auto& t : s.preference) {
      nlohmann::ordered_json tj;
      tj["direction"] = t.direction;
      tj["thresholds"] = t.thresholds;
      tj["rows"] = nlohmann::ordered_json::array();
      for (const auto& row : t.rows) {
        nlohmann::ordered_json rj;
        rj["language"] = row.language;
        rj["cells"] = nlohmann::ordered_json::array();
        for (const auto& c : row.cells) rj["cells"].push_back(detail::to_json(c));
        tj["rows"].push_back(std::move(rj));
      }
      sj["preference"].push_back(std::move(tj));
    }
    sj["histograms"] = nlohmann::ordered_json::object();
    if (s.raw_histogram) sj["histograms"]["raw"] = detail::to_json(*s.raw_histogram);
    if (s.density_histogram) sj["histograms"]["density"] = detail::to_json(*s.density_histogram);
    sj["bias"] = nlohmann::ordered_json::object();
    if (s.passage_bias) sj["bias"]["passages"] = detail::to_json(*s.passage_bias);
    if (s.preference_bias) sj["bias"]["preference"] = detail::to_json(*s.preference_bias);
    j["scorers"].push_back(std::move(sj));
  }
  return j;
}

inline BiasReport bias_report_from_json(const nlohmann::json& j) {
  BiasReport r;
  try {
    r.metadata = j.value("metadata", nlohmann::json::object());
    for (const auto& sj : j.at("scorers")) {
      ScorerSection s;
      s.name = sj.at("name").get<std::string>();
      s.identity = sj.value("identity", nlohmann::json::object());
      s.status = sj.value("status", std::string("ok"));
      s.error = sj.value("error", std::string{});
      for (const auto& x : sj.value("series", nlohmann::json::array())) s.series.push_back(detail::series_from_json(x));
      for (const auto& pj : sj.value("perturbations", nlohmann::json::array())) {
        PerturbationSection p;
        p.category = pj.at("category").get<std::string>();
        p.gold_rating = pj.value("gold_rating", 0.0);
        p.n_groups = pj.value("n_groups", std::size_t{0});
        p.n_skipped = pj.value("n_skipped", std::size_t{0});
        for (const auto& x : pj.value("series", nlohmann::json::array())) p.series.push_back(detail::series_from_json(x));
        s.perturbations.push_back(std::move(p));
      }
      for (const auto& tj : sj.value("preference", nlohmann::json::array())) {
        PreferenceTable t;
        t.direction = tj.at("direction").get<std::string>();
        t.thresholds = tj.at("thresholds").get<std::vector<double>>();
        for (const auto& rj : tj.at("rows")) {
          PreferenceRow row;
          row.language = rj.at("language").get<std::string>();
          for (const auto& c : rj.at("cells")) row.cells.push_back(detail::preference_from_json(c));
          if (row.cells.size() != t.thresholds.size()) {
            throw DataError("preference row " + row.language + " does not match the threshold list");
          }
          t.rows.push_back(std::move(row));
        }
        s.preference.push_back(std::move(t));
      }
      const auto h = sj.value("histograms", nlohmann::json::object());
      if (h.contains("raw")) s.raw_histogram = detail::histogram_from_json(h["raw"]);
      if (h.contains("density")) s.density_histogram = detail::histogram_from_json(h["density"]);
      const auto b = sj.value("bias", nlohmann::json::object());
      if (b.contains("passages")) s.passage_bias = detail::bias_from_json(b["passages"]);
      if (b.contains("preference")) s.preference_bias = detail::bias_from_json(b["preference"]);
      r.scorers.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
  return r;
}

inline BiasReport load_bias_report(const std::filesystem::path& path) {
  const std::string text = io::read_file(path);
  try {
    return bias_report_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("report " + path.string() + " is not valid JSON: " + e.what());
  }
}

}  // namespace lenbias
