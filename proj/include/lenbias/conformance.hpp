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

#include <chrono>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lenbias/adapter.hpp"
#include "lenbias/error.hpp"
#include "lenbias/io.hpp"
#include "lenbias/scorer_gateway.hpp"
#include "lenbias/subprocess.hpp"
#include "lenbias/suite_builder.hpp"
#include "lenbias/utf8.hpp"

// Protocol conformance vectors for scorer adapters. One case per JSONL line:
// {"name", "requests": [wire requests, sent verbatim], "expect": "ok"|"error",
//  "stub_scores": [optional expected scores of the stub adapter]}.
namespace lenbias {

struct ConformanceCase {
  std::string name;
  std::vector<nlohmann::json> requests;
  bool expect_error = false;
  std::optional<std::vector<double>> stub_scores;
};

struct ConformanceResult {
  std::string name;
  bool passed = false;
  std::string message;
};

struct ConformanceOptions {
  bool check_stub_scores = false;
  std::chrono::milliseconds timeout{std::chrono::seconds(30)};
};

// Score of the documented stub adapter: minus the hypothesis length in
// Unicode scalars, divided by 1000.
inline double stub_score(std::string_view hypothesis) {
  return -static_cast<double>(utf8::length(hypothesis)) / 1000.0;
}

inline ConformanceCase conformance_case_from_json(const nlohmann::json& j) {
  ConformanceCase c;
  c.name = j.at("name").get<std::string>();
  for (const auto& r : j.at("requests")) c.requests.push_back(r);
  c.expect_error = j.value("expect", std::string("ok")) == "error";
  if (j.contains("stub_scores")) c.stub_scores = j["stub_scores"].get<std::vector<double>>();
  return c;
}

inline std::vector<ConformanceCase> load_conformance_vectors(const std::filesystem::path& path) {
  return parse_jsonl(io::read_file(path), conformance_case_from_json);
}

namespace detail {

// Maps gateway failures onto the conformance vocabulary.
inline std::string classify_failure(const std::string& what) {
  if (what.rfind("missing response for id ", 0) == 0) return "missing id: " + what.substr(24);
  if (what.rfind("duplicate response id ", 0) == 0) return "duplicate id: " + what.substr(22);
  if (what.rfind("unknown response id ", 0) == 0) return "unknown id: " + what.substr(20);
  return what;
}

inline ConformanceResult run_empty_case(const std::string& command, const ConformanceCase& c,
                                        const ConformanceOptions& opt) {
  Subprocess proc(command);
  proc.close_stdin();
  std::string line;
  const auto st = proc.read_line(line, opt.timeout);
  if (st == Subprocess::ReadStatus::kTimeout) {
    proc.kill();
    proc.wait();
    return {c.name, false, "adapter did not exit on an empty input stream"};
  }
  if (st == Subprocess::ReadStatus::kLine) {
    proc.kill();
    proc.wait();
    return {c.name, false, "adapter wrote output for an empty input stream: " + line.substr(0, 200)};
  }
  const int status = proc.wait();
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    return {c.name, false, "adapter ended with " + describe_wait_status(status)};
  }
  return {c.name, true, "clean exit"};
}

}  // namespace detail

inline ConformanceResult run_conformance_case(const std::string& command, const ConformanceCase& c,
                                              const ConformanceOptions& opt = {}) {
  if (c.requests.empty()) return detail::run_empty_case(command, c, opt);
  std::vector<std::string> lines;
  std::vector<std::string> ids;
  for (const auto& r : c.requests) {
    lines.push_back(r.dump());
    ids.push_back(r.at("id").get<std::string>());
  }
  std::vector<nlohmann::json> raw;
  try {
    raw = exchange_lines(command, lines, ids, opt.timeout, "adapter");
  } catch (const ScorerError& e) {
    const std::string what = e.what();
    if (c.expect_error && what.find("reported an error") != std::string::npos) return {c.name, true, "error line"};
    return {c.name, false, detail::classify_failure(what)};
  }
  if (c.expect_error) return {c.name, false, "expected an error line, got " + std::to_string(raw.size()) + " responses"};
  for (std::size_t i = 0; i < raw.size(); ++i) {
    ScoreResponse r;
    try {
      r = score_response_from_wire(raw[i]);
    } catch (const ScorerError& e) {
      return {c.name, false, e.what()};
    }
    const std::string hypothesis = c.requests[i].at("hypothesis").get<std::string>();
    if (raw[i].contains("echo") && raw[i]["echo"] != hypothesis) {
      return {c.name, false, "UTF-8 corruption: echo differs for id " + ids[i]};
    }
    if (opt.check_stub_scores && c.stub_scores) {
      const double want = c.stub_scores->at(i);
      if (std::abs(r.score - want) > 1e-12) {
        return {c.name, false, "score for id " + ids[i] + " is " + std::to_string(r.score) + ", expected " +
                                   std::to_string(want)};
      }
    }
  }
  return {c.name, true, std::to_string(raw.size()) + " responses"};
}

inline std::vector<ConformanceResult> run_conformance(const std::string& command,
                                                      const std::vector<ConformanceCase>& cases,
                                                      const ConformanceOptions& opt = {}) {
  std::vector<ConformanceResult> out;
  for (const auto& c : cases) out.push_back(run_conformance_case(command, c, opt));
  return out;
}

}  // namespace lenbias
