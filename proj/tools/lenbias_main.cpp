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

// lenbias: length-bias audit for translation quality scorers.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lenbias/audit.hpp"
#include "lenbias/conformance.hpp"
#include "lenbias/error.hpp"
#include "lenbias/format.hpp"
#include "lenbias/report.hpp"
#include "lenbias/stages.hpp"

namespace {

struct Overrides {
  std::string config;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> scorers;
  std::string adapter_cmd;
  std::string adapter_url;
  std::string mode;
  std::string thresholds;
  std::optional<std::size_t> max_segments;
  std::optional<std::size_t> window_tokens;
  std::optional<std::string> separator;
  std::optional<double> timeout_secs;
};

std::vector<double> parse_thresholds(const std::string& text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string item = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw lenbias::ConfigError("bad threshold '" + item + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::optional<std::filesystem::path> config_path(const Overrides& o) {
  if (!o.config.empty()) return std::filesystem::path(o.config);
  if (const char* env = std::getenv("LENBIAS_CONFIG"); env != nullptr && *env != '\0') {
    return std::filesystem::path(env);
  }
  return std::nullopt;
}

// Applies command-line overrides to the config document before parsing, so
// the digest reflects them.
lenbias::AuditConfig load_config(const Overrides& o) {
  const auto path = config_path(o);
  if (!path) throw lenbias::ConfigError("no config given (use --config or set LENBIAS_CONFIG)");
  if (!std::filesystem::exists(*path)) throw lenbias::ConfigError("config file not found: " + path->string());
  nlohmann::json j = lenbias::read_config_json(*path);
  if (!j.is_object()) throw lenbias::ConfigError("config must be a JSON object");
  if (o.seed) j["seed"] = *o.seed;
  if (!j.contains("suite")) j["suite"] = nlohmann::json::object();
  if (!o.thresholds.empty()) j["suite"]["thresholds"] = parse_thresholds(o.thresholds);
  if (o.max_segments) j["suite"]["max_segments"] = *o.max_segments;
  if (o.window_tokens) j["suite"]["window_tokens"] = *o.window_tokens;
  if (o.separator) j["suite"]["separator"] = *o.separator;

  nlohmann::json cli_scorers = nlohmann::json::array();
  for (const auto& s : o.scorers) cli_scorers.push_back(lenbias::scorer_json_from_cli(s));
  if (!o.adapter_cmd.empty()) {
    cli_scorers.push_back({{"kind", "external_subprocess"}, {"name", "adapter"}, {"command", o.adapter_cmd}});
  }
  if (!o.adapter_url.empty()) {
    cli_scorers.push_back({{"kind", "external_http"}, {"name", "http_adapter"}, {"url", o.adapter_url}});
  }
  if (!cli_scorers.empty()) j["scorers"] = cli_scorers;
  if (j.contains("scorers") && j["scorers"].is_array()) {
    for (auto& s : j["scorers"]) {
      if (!s.is_object()) continue;
      if (!o.mode.empty()) s["mode"] = o.mode;
      if (o.timeout_secs) s["timeout_secs"] = *o.timeout_secs;
    }
  }
  if (o.timeout_secs && j.contains("perturbation_adapter") && j["perturbation_adapter"].is_object()) {
    j["perturbation_adapter"]["timeout_secs"] = *o.timeout_secs;
  }
  auto config = lenbias::audit_config_from_json(j, path->parent_path());
  if (!o.out_dir.empty()) config.out_dir = std::filesystem::absolute(o.out_dir).lexically_normal();
  return config;
}

void print_summary(const lenbias::BiasReport& r) {
  for (const auto& s : r.scorers) {
    if (!s.ok()) {
      std::printf("%s: failed (%s)\n", s.name.c_str(), s.error.c_str());
      continue;
    }
    for (const auto& x : s.series) {
      if (x.language != lenbias::kAggregateLabel) continue;
      std::printf("%s: %zu documents, %s%% decreasing, slope %s\n", s.name.c_str(), x.trend.n_docs,
                  lenbias::fmt::percent(x.trend.proportion).c_str(),
                  x.slope ? lenbias::fmt::score(*x.slope).c_str() : "n/a");
    }
  }
}

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Audit config (JSON); defaults to $LENBIAS_CONFIG");
  cmd->add_option("--out-dir", o.out_dir, "Output directory");
  cmd->add_option("--seed", o.seed, "Seed for perturbations and synthetic noise");
  cmd->add_option("--scorer", o.scorers, "Scorer spec kind[:key=value,...]; replaces config scorers");
  cmd->add_option("--adapter-cmd", o.adapter_cmd, "Command of a wire-protocol scorer adapter");
  cmd->add_option("--adapter-url", o.adapter_url, "Base URL of an HTTP scorer adapter");
  cmd->add_option("--mode", o.mode, "Scoring mode")->check(CLI::IsMember({"qe", "ref", "hybrid"}));
  cmd->add_option("--thresholds", o.thresholds, "Comma-separated relative length thresholds");
  cmd->add_option("--max-segments", o.max_segments, "Segments per passage group");
  cmd->add_option("--window-tokens", o.window_tokens, "Context window in tokens");
  cmd->add_option("--separator", o.separator, "Segment separator inside passages");
  cmd->add_option("--timeout-secs", o.timeout_secs, "Per-response timeout for external adapters");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Length-bias audit for translation quality scorers"};
  app.require_subcommand(1);
  Overrides o;
  std::string vectors = LENBIAS_CONFORMANCE_VECTORS;
  bool stub_scores = false;

  auto* ingest = app.add_subcommand("ingest", "Validate corpora and write normalized JSONL");
  auto* build = app.add_subcommand("build-suite", "Build passage groups and hypothesis pairs");
  auto* perturb = app.add_subcommand("perturb", "Insert controlled MQM errors into passage groups");
  auto* score = app.add_subcommand("score", "Score every suite item with each scorer");
  auto* analyze = app.add_subcommand("analyze", "Compute bias statistics into report.json");
  auto* report = app.add_subcommand("report", "Render CSV/JSON tables and SVG charts from report.json");
  auto* audit = app.add_subcommand("audit", "Run every stage");
  for (auto* cmd : {ingest, build, perturb, score, analyze, report, audit}) add_common(cmd, o);
  auto* conformance = app.add_subcommand("conformance", "Run protocol conformance vectors against an adapter");
  conformance->add_option("--adapter-cmd", o.adapter_cmd, "Adapter command")->required();
  conformance->add_option("--vectors", vectors, "Conformance vectors (JSONL)");
  conformance->add_flag("--stub-scores", stub_scores, "Also check the stub adapter's expected scores");
  conformance->add_option("--timeout-secs", o.timeout_secs, "Per-response timeout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (conformance->parsed()) {
      lenbias::ConformanceOptions opt;
      opt.check_stub_scores = stub_scores;
      if (o.timeout_secs) opt.timeout = std::chrono::milliseconds(static_cast<long long>(*o.timeout_secs * 1000));
      bool all = true;
      for (const auto& r : lenbias::run_conformance(o.adapter_cmd, lenbias::load_conformance_vectors(vectors), opt)) {
        std::printf("%s %s: %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.message.c_str());
        all = all && r.passed;
      }
      return all ? 0 : 2;
    }
    if (report->parsed() && !config_path(o) && !o.out_dir.empty()) {
      const std::filesystem::path dir(o.out_dir);
      const auto r = lenbias::load_bias_report(dir / "report.json");
      lenbias::emit_tables(r, dir);
      lenbias::emit_charts(r, dir);
      return 0;
    }
    const lenbias::AuditConfig config = load_config(o);
    if (ingest->parsed()) lenbias::stages::ingest(config);
    if (build->parsed()) lenbias::stages::build_suite(config);
    if (perturb->parsed()) lenbias::stages::perturb(config);
    if (score->parsed()) {
      for (const auto& out : lenbias::stages::score(config)) {
        if (out.error) std::fprintf(stderr, "lenbias: scorer %s failed: %s\n", out.name.c_str(), out.error->c_str());
      }
    }
    if (analyze->parsed()) print_summary(lenbias::stages::analyze(config));
    if (report->parsed()) lenbias::stages::report(config);
    if (audit->parsed()) print_summary(lenbias::stages::audit(config));
    return 0;
  } catch (const lenbias::Error& e) {
    std::fprintf(stderr, "lenbias: error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "lenbias: error: %s\n", e.what());
    return 3;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "lenbias: error: %s\n", e.what());
    return 1;
  }
}
