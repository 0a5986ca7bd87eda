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
#include <vector>

#include <json.hpp>

#include "lenbias/audit.hpp"
#include "lenbias/io.hpp"
#include "lenbias/report.hpp"

// Staged execution. Every stage reads the previous stage's files from
// <out_dir>/work and writes its own, so expensive scoring can be cached and
// analyses rerun.
namespace lenbias::stages {

inline std::filesystem::path work_dir(const AuditConfig& c) { return c.out_dir / "work"; }
inline std::filesystem::path report_path(const AuditConfig& c) { return c.out_dir / "report.json"; }
inline std::filesystem::path scores_path(const AuditConfig& c, const std::string& scorer) {
  return work_dir(c) / ("scores_" + sanitize_filename(scorer) + ".json");
}

namespace detail {

inline std::string require(const std::filesystem::path& p, const char* stage) {
  if (!std::filesystem::exists(p)) {
    throw ConfigError(p.string() + " not found; run the '" + std::string(stage) + "' stage first");
  }
  return io::read_file(p);
}

inline nlohmann::json parse_json(const std::string& text, const std::filesystem::path& p) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

inline nlohmann::ordered_json to_json(const PairSet& set, const HypothesisPair& p) {
  nlohmann::ordered_json j;
  j["language"] = set.language;
  j["direction"] = set.direction;
  j["pair"] = lenbias::to_json(p);
  return j;
}

}  // namespace detail

// Validates the corpora and writes them as normalized JSONL.
inline void ingest(const AuditConfig& c) {
  const auto corpora = ingest_corpora(c);
  for (const auto& in : c.chunks) load_chunks(in.path);
  const auto labels = language_labels(c, corpora);
  const auto dir = work_dir(c);
  io::ensure_directory(dir);
  nlohmann::ordered_json manifest;
  manifest["config_digest"] = config_digest(c);
  manifest["corpora"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < corpora.size(); ++i) {
    const std::string file = "corpus_" + std::to_string(i) + ".jsonl";
    save_corpus(corpora[i], dir / file, CorpusFormat::kJsonl);
    manifest["corpora"].push_back(
        {{"file", file}, {"lang_pair", corpora[i].lang_pair}, {"label", labels.at(corpora[i].lang_pair)}});
  }
  io::write_file_atomic(dir / "ingest.json", manifest.dump(2) + "\n");
}

inline void build_suite(const AuditConfig& c) {
  const auto dir = work_dir(c);
  const auto manifest = detail::parse_json(detail::require(dir / "ingest.json", "ingest"), dir / "ingest.json");
  std::vector<Corpus> corpora;
  AuditConfig relabeled = c;
  relabeled.corpora.clear();
  for (const auto& e : manifest.at("corpora")) {
    const auto path = dir / e.at("file").get<std::string>();
    corpora.push_back(parse_corpus(detail::require(path, "ingest"), CorpusFormat::kJsonl, path.string()));
    relabeled.corpora.push_back({path, CorpusFormat::kJsonl, e.value("label", std::string{})});
  }
  AuditInputs in;
  build_suites(relabeled, corpora, in);
  io::write_file_atomic(dir / "passages.jsonl", to_jsonl(in.groups));
  std::string pairs;
  for (const auto& set : in.pair_sets) {
    for (const auto& p : set.suite.pairs) pairs += detail::to_json(set, p).dump() + "\n";
  }
  io::write_file_atomic(dir / "pairs.jsonl", pairs);
  nlohmann::ordered_json meta;
  meta["discarded_groups"] = in.discarded;
  meta["language_labels"] = in.language_labels;
  meta["pair_sets"] = nlohmann::ordered_json::array();
  for (const auto& set : in.pair_sets) {
    meta["pair_sets"].push_back({{"language", set.language},
                                 {"direction", set.direction},
                                 {"pairs", set.suite.pairs.size()},
                                 {"dropped", set.suite.dropped}});
  }
  io::write_file_atomic(dir / "suite.json", meta.dump(2) + "\n");
}

// Loads the suite written by build_suite (and perturbations if present).
inline AuditInputs load_inputs(const AuditConfig& c, bool with_perturbations) {
  const auto dir = work_dir(c);
  AuditInputs in;
  in.groups = parse_jsonl(detail::require(dir / "passages.jsonl", "build-suite"), passage_group_from_json);
  const auto meta = detail::parse_json(detail::require(dir / "suite.json", "build-suite"), dir / "suite.json");
  in.discarded = meta.value("discarded_groups", std::size_t{0});
  in.language_labels = meta.value("language_labels", std::map<std::string, std::string>{});
  for (const auto& s : meta.value("pair_sets", nlohmann::json::array())) {
    PairSet set{s.at("language").get<std::string>(), s.at("direction").get<std::string>(), {}};
    set.suite.dropped = s.value("dropped", std::size_t{0});
    in.pair_sets.push_back(std::move(set));
  }
  const auto pair_lines = parse_jsonl(detail::require(dir / "pairs.jsonl", "build-suite"), [](const nlohmann::json& j) {
    return std::make_tuple(j.at("language").get<std::string>(), j.at("direction").get<std::string>(),
                           hypothesis_pair_from_json(j.at("pair")));
  });
  for (const auto& [language, direction, pair] : pair_lines) {
    auto it = std::find_if(in.pair_sets.begin(), in.pair_sets.end(), [&](const PairSet& s) {
      return s.language == language && s.direction == direction;
    });
    if (it == in.pair_sets.end()) throw DataError("pair for unknown set " + language + "/" + direction);
    it->suite.pairs.push_back(pair);
  }
  if (with_perturbations && !c.perturbations.empty()) {
    in.perturbed = parse_jsonl(detail::require(dir / "perturbed.jsonl", "perturb"), perturbed_group_from_json);
    const auto pmeta = detail::parse_json(detail::require(dir / "perturb.json", "perturb"), dir / "perturb.json");
    in.perturbation_skipped = pmeta.value("skipped", std::map<std::string, std::size_t>{});
  }
  return in;
}

inline void perturb(const AuditConfig& c) {
  AuditInputs in = load_inputs(c, false);
  build_perturbations(c, in);
  const auto dir = work_dir(c);
  io::write_file_atomic(dir / "perturbed.jsonl", to_jsonl(in.perturbed));
  nlohmann::ordered_json meta;
  meta["skipped"] = in.perturbation_skipped;
  io::write_file_atomic(dir / "perturb.json", meta.dump(2) + "\n");
}

// Writes one score file per scorer. Throws ScorerError if all failed.
inline std::vector<ScorerOutcome> score(const AuditConfig& c) {
  const AuditInputs in = load_inputs(c, true);
  auto outcomes = score_all(c, in);
  std::string errors;
  bool any_ok = false;
  for (const auto& o : outcomes) {
    io::write_file_atomic(scores_path(c, o.name), to_json(o).dump() + "\n");
    if (o.error) {
      errors += (errors.empty() ? "" : "; ") + o.name + ": " + *o.error;
    } else {
      any_ok = true;
    }
  }
  if (!any_ok) throw ScorerError("all scorers failed: " + errors);
  return outcomes;
}

inline BiasReport analyze(const AuditConfig& c) {
  const AuditInputs in = load_inputs(c, true);
  std::vector<ScorerOutcome> outcomes;
  for (const auto& entry : c.scorers) {
    const auto path = scores_path(c, entry.spec.name);
    auto o = scorer_outcome_from_json(detail::parse_json(detail::require(path, "score"), path));
    if (nlohmann::json(o.identity) != nlohmann::json(scorer_identity(entry))) {
      throw ConfigError(path.string() + " was produced by a different scorer configuration; rerun 'score'");
    }
    o.identity = scorer_identity(entry);
    outcomes.push_back(std::move(o));
  }
  BiasReport report = lenbias::analyze(c, in, outcomes);
  io::ensure_directory(c.out_dir);
  io::write_file_atomic(report_path(c), to_json(report).dump(2) + "\n");
  return report;
}

inline void report(const AuditConfig& c) {
  const auto path = report_path(c);
  detail::require(path, "analyze");
  const BiasReport r = load_bias_report(path);
  emit_tables(r, c.out_dir);
  emit_charts(r, c.out_dir);
}

inline BiasReport audit(const AuditConfig& c) {
  validate_config(c);
  ingest(c);
  build_suite(c);
  perturb(c);
  // Scorer failures are recorded in the score files; analyze decides
  // whether enough succeeded.
  try {
    score(c);
  } catch (const ScorerError&) {
  }
  BiasReport r = analyze(c);
  emit_tables(r, c.out_dir);
  emit_charts(r, c.out_dir);
  return r;
}

}  // namespace lenbias::stages
