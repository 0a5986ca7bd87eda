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
#include <chrono>
#include <cmath>
#include <exception>
#include <future>
#include <httplib.h>
#include <limits>
#include <map>
#include <json.hpp>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lenbias/adapter.hpp"
#include "lenbias/corpus.hpp"
#include "lenbias/error.hpp"
#include "lenbias/normalize.hpp"
#include "lenbias/perturb.hpp"
#include "lenbias/rng.hpp"

namespace lenbias {

enum class ScoreMode { kQe, kRef, kHybrid };

inline std::string to_string(ScoreMode m) {
  switch (m) {
    case ScoreMode::kQe: return "qe";
    case ScoreMode::kRef: return "ref";
    case ScoreMode::kHybrid: return "hybrid";
  }
  return "qe";
}

inline ScoreMode score_mode_from_string(std::string_view s) {
  if (s == "qe") return ScoreMode::kQe;
  if (s == "ref") return ScoreMode::kRef;
  if (s == "hybrid") return ScoreMode::kHybrid;
  throw ConfigError("unknown mode '" + std::string(s) + "' (expected qe, ref or hybrid)");
}

struct ScoreRequest {
  std::string id;
  std::string source;
  std::string hypothesis;
  std::optional<std::string> reference;
  ScoreMode mode = ScoreMode::kQe;

  bool operator==(const ScoreRequest&) const = default;
};

// `score` follows the MQM convention (0 best, negative worse) unless the
// scorer declares lower_better. `is_density` marks per-token error density.
struct ScoreResponse {
  std::string id;
  double score = 0.0;
  bool is_density = false;
  std::optional<std::vector<MqmAnnotation>> spans;

  bool operator==(const ScoreResponse&) const = default;
};

enum class ScorerKind { kSyntheticBiased, kLexicalOverlap, kExternalSubprocess, kExternalHttp };

inline std::string to_string(ScorerKind k) {
  switch (k) {
    case ScorerKind::kSyntheticBiased: return "synthetic_biased";
    case ScorerKind::kLexicalOverlap: return "lexical_overlap";
    case ScorerKind::kExternalSubprocess: return "external_subprocess";
    case ScorerKind::kExternalHttp: return "external_http";
  }
  return "unknown";
}

inline ScorerKind scorer_kind_from_string(std::string_view s) {
  for (auto k : {ScorerKind::kSyntheticBiased, ScorerKind::kLexicalOverlap,
                 ScorerKind::kExternalSubprocess, ScorerKind::kExternalHttp}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown scorer kind '" + std::string(s) + "'");
}

// Which way the raw score points. Statistics work on higher-is-better
// values; lower_better scorers (e.g. positive MQM error totals) are negated
// on ingestion.
enum class Orientation { kHigherBetter, kLowerBetter };

inline std::string to_string(Orientation o) {
  return o == Orientation::kHigherBetter ? "higher_better" : "lower_better";
}

inline Orientation orientation_from_string(std::string_view s) {
  if (s == "higher_better") return Orientation::kHigherBetter;
  if (s == "lower_better") return Orientation::kLowerBetter;
  throw ConfigError("unknown orientation '" + std::string(s) + "'");
}

inline double orient(double raw, Orientation o) { return o == Orientation::kHigherBetter ? raw : -raw; }

struct SyntheticParams {
  double base = 0.0;
  double alpha = 0.0;  // penalty per hypothesis token
  double sigma = 0.0;
  std::uint64_t seed = 0;
  double clamp_lo = -std::numeric_limits<double>::infinity();
  double clamp_hi = std::numeric_limits<double>::infinity();
  bool emit_density = false;  // report the score as an error density
};

struct ScorerSpec {
  std::string name;
  ScorerKind kind = ScorerKind::kSyntheticBiased;
  SyntheticParams synthetic;
  std::string command;  // external_subprocess
  std::string url;      // external_http
  Orientation orientation = Orientation::kHigherBetter;
  std::chrono::milliseconds timeout{std::chrono::seconds(120)};
  std::size_t processes = 1;  // concurrent adapter processes per batch
  TokenCounter counter = TokenCounter::whitespace();
  // Set by wrap_density_scorer: rescale density responses by |h|.
  std::optional<TokenCounter> density_counter;
};

// ---------------------------------------------------------------------------
// Wire protocol v1

inline std::string to_wire(const ScoreRequest& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["source"] = r.source;
  j["hypothesis"] = r.hypothesis;
  j["reference"] = r.reference ? nlohmann::ordered_json(*r.reference) : nlohmann::ordered_json(nullptr);
  j["mode"] = to_string(r.mode);
  return j.dump();
}

inline nlohmann::ordered_json to_wire_json(const ScoreResponse& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["score"] = r.score;
  j["is_density"] = r.is_density;
  if (r.spans) {
    j["spans"] = nlohmann::ordered_json::array();
    for (const auto& a : *r.spans) {
      nlohmann::ordered_json s;
      s["start"] = a.start;
      s["end"] = a.end;
      s["severity"] = to_string(a.severity);
      s["dimension"] = to_string(a.dimension);
      j["spans"].push_back(std::move(s));
    }
  } else {
    j["spans"] = nullptr;
  }
  return j;
}

inline std::string to_wire(const ScoreResponse& r) { return to_wire_json(r).dump(); }

inline ScoreRequest score_request_from_wire(const nlohmann::json& j) {
  if (!j.is_object()) throw ScorerError("request is not a JSON object");
  ScoreRequest r;
  r.id = j.at("id").get<std::string>();
  r.source = j.at("source").get<std::string>();
  r.hypothesis = j.at("hypothesis").get<std::string>();
  if (j.contains("reference") && !j["reference"].is_null()) r.reference = j["reference"].get<std::string>();
  r.mode = score_mode_from_string(j.at("mode").get<std::string>());
  return r;
}

inline ScoreResponse score_response_from_wire(const nlohmann::json& j) {
  const auto bad = [&](const std::string& why) {
    return ScorerError("malformed response line: " + why + ": " + j.dump().substr(0, 200));
  };
  if (!j.is_object()) throw bad("not an object");
  ScoreResponse r;
  if (!j.contains("id") || !j["id"].is_string()) throw bad("missing string id");
  r.id = j["id"].get<std::string>();
  if (!j.contains("score") || !j["score"].is_number()) throw bad("missing numeric score");
  r.score = j["score"].get<double>();
  if (!std::isfinite(r.score)) throw bad("non-finite score");
  if (!j.contains("is_density") || !j["is_density"].is_boolean()) throw bad("missing boolean is_density");
  r.is_density = j["is_density"].get<bool>();
  if (j.contains("spans") && !j["spans"].is_null()) {
    if (!j["spans"].is_array()) throw bad("spans must be null or a list");
    std::vector<MqmAnnotation> spans;
    try {
      for (const auto& s : j["spans"]) spans.push_back(mqm_annotation_from_json(s));
    } catch (const std::exception& e) {
      throw bad(std::string("bad span: ") + e.what());
    }
    r.spans = std::move(spans);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Built-in scorers

inline double synthetic_biased_score(const SyntheticParams& p, const ScoreRequest& request,
                                     const TokenCounter& counter) {
  if (p.clamp_lo > p.clamp_hi) throw ConfigError("clamp lower bound exceeds upper bound");
  double noise = 0.0;
  if (p.sigma != 0.0) {
    SplitMix64 rng(p.seed, request.id);
    noise = p.sigma * rng.normal();
  }
  const double tokens = static_cast<double>(counter.count(request.hypothesis));
  return std::clamp(p.base - p.alpha * tokens + noise, p.clamp_lo, p.clamp_hi);
}

// Token-level F1 over whitespace-token multisets, mapped to 25 * (F1 - 1).
inline double lexical_overlap_score(const ScoreRequest& request) {
  if (request.mode == ScoreMode::kQe || !request.reference) {
    throw ConfigError("lexical_overlap needs a reference (mode ref or hybrid), request " + request.id);
  }
  const auto split = [](std::string_view text) {
    std::map<std::string, std::size_t> bag;
    std::size_t total = 0;
    std::string cur;
    for (std::size_t i = 0; i <= text.size();) {
      const bool end = i == text.size();
      const auto cp = end ? utf8::CodePoint{U' ', i, 1} : utf8::decode_at(text, i);
      if (utf8::is_space(cp.value)) {
        if (!cur.empty()) {
          ++bag[cur];
          ++total;
          cur.clear();
        }
      } else {
        cur.append(text.substr(i, cp.length));
      }
      i += cp.length;
    }
    return std::make_pair(bag, total);
  };
  const auto [hyp, hyp_n] = split(request.hypothesis);
  const auto [ref, ref_n] = split(*request.reference);
  if (hyp_n == 0 && ref_n == 0) return 0.0;
  std::size_t overlap = 0;
  for (const auto& [tok, n] : hyp) {
    if (auto it = ref.find(tok); it != ref.end()) overlap += std::min(n, it->second);
  }
  if (overlap == 0) return -25.0;
  const double precision = static_cast<double>(overlap) / static_cast<double>(hyp_n);
  const double recall = static_cast<double>(overlap) / static_cast<double>(ref_n);
  const double f1 = 2.0 * precision * recall / (precision + recall);
  return 25.0 * (f1 - 1.0);
}

// ---------------------------------------------------------------------------
// Transports

namespace detail {

inline std::vector<ScoreResponse> collect_responses(const std::vector<nlohmann::json>& raw) {
  std::vector<ScoreResponse> out;
  out.reserve(raw.size());
  for (const auto& j : raw) out.push_back(score_response_from_wire(j));
  return out;
}

inline std::vector<ScoreResponse> score_subprocess(const ScorerSpec& spec,
                                                   std::span<const ScoreRequest> requests) {
  if (spec.command.empty()) throw ConfigError("scorer " + spec.name + ": external_subprocess needs a command");
  const auto run = [&](std::span<const ScoreRequest> part) {
    std::vector<std::string> lines;
    std::vector<std::string> ids;
    for (const auto& r : part) {
      lines.push_back(to_wire(r));
      ids.push_back(r.id);
    }
    return collect_responses(exchange_lines(spec.command, lines, ids, spec.timeout, "scorer adapter"));
  };
  const std::size_t procs = std::clamp<std::size_t>(spec.processes, 1, std::max<std::size_t>(1, requests.size()));
  if (procs == 1) return run(requests);

  // Contiguous sub-batches, one adapter process each; all must succeed.
  std::vector<std::future<std::vector<ScoreResponse>>> parts;
  const std::size_t per = (requests.size() + procs - 1) / procs;
  for (std::size_t begin = 0; begin < requests.size(); begin += per) {
    const auto part = requests.subspan(begin, std::min(per, requests.size() - begin));
    parts.push_back(std::async(std::launch::async, run, part));
  }
  std::vector<ScoreResponse> out;
  std::exception_ptr first_error;
  for (auto& f : parts) {
    try {
      auto got = f.get();
      out.insert(out.end(), std::make_move_iterator(got.begin()), std::make_move_iterator(got.end()));
    } catch (...) {
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

inline std::vector<ScoreResponse> score_http(const ScorerSpec& spec, std::span<const ScoreRequest> requests) {
  if (spec.url.empty()) throw ConfigError("scorer " + spec.name + ": external_http needs a URL");
  // Split "scheme://host:port/prefix" into the client base and path prefix.
  std::string base = spec.url;
  std::string prefix;
  if (const auto scheme = base.find("://"); scheme != std::string::npos) {
    if (const auto slash = base.find('/', scheme + 3); slash != std::string::npos) {
      prefix = base.substr(slash);
      base = base.substr(0, slash);
    }
  }
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

  httplib::Client client(base);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(spec.timeout).count();
  client.set_connection_timeout(std::max<long long>(1, secs), 0);
  client.set_read_timeout(std::max<long long>(1, secs), 0);
  client.set_write_timeout(std::max<long long>(1, secs), 0);

  std::string body = "[";
  for (std::size_t i = 0; i < requests.size(); ++i) {
    if (i > 0) body += ',';
    body += to_wire(requests[i]);
  }
  body += ']';

  const auto res = client.Post(prefix + "/score", body, "application/json");
  if (!res) throw ScorerError("HTTP scorer " + spec.url + ": " + httplib::to_string(res.error()));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception&) {
    throw ScorerError("HTTP scorer " + spec.url + " returned a non-JSON body (status " +
                      std::to_string(res->status) + ")");
  }
  if (j.is_object() && j.contains("error")) {
    throw ScorerError("HTTP scorer reported an error: " +
                      (j["error"].is_string() ? j["error"].get<std::string>() : j["error"].dump()));
  }
  if (res->status != 200) {
    throw ScorerError("HTTP scorer " + spec.url + " answered status " + std::to_string(res->status));
  }
  if (!j.is_array()) throw ScorerError("HTTP scorer response is not a JSON array");

  std::unordered_map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < requests.size(); ++i) slot.emplace(requests[i].id, i);
  std::vector<std::optional<ScoreResponse>> ordered(requests.size());
  for (const auto& item : j) {
    auto r = score_response_from_wire(item);
    const auto it = slot.find(r.id);
    if (it == slot.end()) throw ScorerError("unknown response id " + r.id);
    if (ordered[it->second]) throw ScorerError("duplicate response id " + r.id);
    ordered[it->second] = std::move(r);
  }
  std::vector<ScoreResponse> out;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    if (!ordered[i]) throw ScorerError("missing response for id " + requests[i].id);
    out.push_back(std::move(*ordered[i]));
  }
  return out;
}

inline void validate_requests(std::span<const ScoreRequest> requests) {
  std::unordered_set<std::string> ids;
  for (const auto& r : requests) {
    if (!ids.insert(r.id).second) throw ConfigError("duplicate request id '" + r.id + "'");
    if (r.mode != ScoreMode::kQe && !r.reference) {
      throw ConfigError("request " + r.id + ": mode " + to_string(r.mode) + " requires a reference");
    }
  }
}

}  // namespace detail

// Scores a batch: one response per request, in request order. Either every
// response is returned or an exception is thrown.
inline std::vector<ScoreResponse> score_batch(const ScorerSpec& scorer, std::span<const ScoreRequest> requests) {
  detail::validate_requests(requests);
  if (requests.empty()) return {};

  if (scorer.density_counter) {
    ScorerSpec inner = scorer;
    inner.density_counter.reset();
    auto responses = score_batch(inner, requests);
    std::vector<std::string> hyps;
    for (const auto& r : requests) hyps.push_back(r.hypothesis);
    scorer.density_counter->prime(hyps);
    for (std::size_t i = 0; i < responses.size(); ++i) {
      if (!responses[i].is_density) {
        throw ScorerError("scorer " + inner.name + " does not emit densities (response " +
                          responses[i].id + ")");
      }
      const std::size_t len = scorer.density_counter->count(requests[i].hypothesis);
      if (len == 0) throw ScorerError("request " + requests[i].id + ": hypothesis has 0 tokens");
      responses[i].score = from_density(responses[i].score, len);
      responses[i].is_density = false;
    }
    return responses;
  }

  switch (scorer.kind) {
    case ScorerKind::kSyntheticBiased: {
      std::vector<std::string> hyps;
      for (const auto& r : requests) hyps.push_back(r.hypothesis);
      scorer.counter.prime(hyps);
      std::vector<ScoreResponse> out;
      for (const auto& r : requests) {
        out.push_back({r.id, synthetic_biased_score(scorer.synthetic, r, scorer.counter),
                       scorer.synthetic.emit_density, std::nullopt});
      }
      return out;
    }
    case ScorerKind::kLexicalOverlap: {
      std::vector<ScoreResponse> out;
      for (const auto& r : requests) out.push_back({r.id, lexical_overlap_score(r), false, std::nullopt});
      return out;
    }
    case ScorerKind::kExternalSubprocess: return detail::score_subprocess(scorer, requests);
    case ScorerKind::kExternalHttp: return detail::score_http(scorer, requests);
  }
  throw ConfigError("unsupported scorer kind");
}

inline std::vector<ScoreResponse> score_batch(const ScorerSpec& scorer, const std::vector<ScoreRequest>& requests) {
  return score_batch(scorer, std::span<const ScoreRequest>(requests));
}

// Derived scorer that turns density responses back into ratings:
// score = density * count(hypothesis).
inline ScorerSpec wrap_density_scorer(const ScorerSpec& scorer, const TokenCounter& counter) {
  if (scorer.density_counter) throw ConfigError("scorer " + scorer.name + " is already density-wrapped");
  ScorerSpec wrapped = scorer;
  wrapped.name = "density(" + scorer.name + ")";
  wrapped.density_counter = counter;
  return wrapped;
}

// ---------------------------------------------------------------------------
// Scorer specs from config JSON and CLI strings

inline nlohmann::ordered_json to_json(const ScorerSpec& s) {
  nlohmann::ordered_json j;
  j["name"] = s.name;
  j["kind"] = to_string(s.kind);
  j["orientation"] = to_string(s.orientation);
  if (s.kind == ScorerKind::kSyntheticBiased) {
    nlohmann::ordered_json p;
    p["base"] = s.synthetic.base;
    p["alpha"] = s.synthetic.alpha;
    p["sigma"] = s.synthetic.sigma;
    p["seed"] = s.synthetic.seed;
    if (std::isfinite(s.synthetic.clamp_lo) || std::isfinite(s.synthetic.clamp_hi)) {
      p["clamp"] = {std::isfinite(s.synthetic.clamp_lo) ? nlohmann::ordered_json(s.synthetic.clamp_lo) : nlohmann::ordered_json(nullptr),
                    std::isfinite(s.synthetic.clamp_hi) ? nlohmann::ordered_json(s.synthetic.clamp_hi) : nlohmann::ordered_json(nullptr)};
    }
    p["emit_density"] = s.synthetic.emit_density;
    p["counter"] = s.counter.to_json();
    j["params"] = std::move(p);
  }
  if (s.kind == ScorerKind::kExternalSubprocess) {
    j["command"] = s.command;
    j["processes"] = s.processes;
  }
  if (s.kind == ScorerKind::kExternalHttp) j["url"] = s.url;
  if (s.kind == ScorerKind::kExternalSubprocess || s.kind == ScorerKind::kExternalHttp) {
    j["timeout_secs"] = static_cast<double>(s.timeout.count()) / 1000.0;
  }
  if (s.density_counter) j["density_counter"] = s.density_counter->to_json();
  return j;
}

inline ScorerSpec scorer_spec_from_json(const nlohmann::json& j, std::uint64_t default_seed = 0) {
  if (!j.is_object() || !j.contains("kind")) throw ConfigError("scorer entry needs a 'kind'");
  ScorerSpec s;
  s.kind = scorer_kind_from_string(j["kind"].get<std::string>());
  s.name = j.value("name", to_string(s.kind));
  if (j.contains("orientation")) s.orientation = orientation_from_string(j["orientation"].get<std::string>());
  s.synthetic.seed = default_seed;
  const nlohmann::json p = j.value("params", nlohmann::json::object());
  if (s.kind == ScorerKind::kSyntheticBiased) {
    s.synthetic.base = p.value("base", 0.0);
    s.synthetic.alpha = p.value("alpha", 0.0);
    s.synthetic.sigma = p.value("sigma", 0.0);
    s.synthetic.seed = p.value("seed", default_seed);
    s.synthetic.emit_density = p.value("emit_density", false);
    if (p.contains("clamp")) {
      const auto& c = p["clamp"];
      if (!c.is_array() || c.size() != 2) throw ConfigError("clamp must be [lo, hi]");
      if (!c[0].is_null()) s.synthetic.clamp_lo = c[0].get<double>();
      if (!c[1].is_null()) s.synthetic.clamp_hi = c[1].get<double>();
      if (s.synthetic.clamp_lo > s.synthetic.clamp_hi) throw ConfigError("clamp lower bound exceeds upper bound");
    }
    if (p.contains("counter")) s.counter = TokenCounter::from_json(p["counter"]);
    if (s.synthetic.sigma < 0) throw ConfigError("sigma must be >= 0");
  }
  s.command = j.value("command", std::string{});
  s.url = j.value("url", std::string{});
  s.processes = j.value("processes", std::size_t{1});
  if (j.contains("timeout_secs")) {
    const double t = j["timeout_secs"].get<double>();
    if (!(t > 0)) throw ConfigError("timeout_secs must be > 0");
    s.timeout = std::chrono::milliseconds(static_cast<long long>(t * 1000.0));
  }
  if (s.kind == ScorerKind::kExternalSubprocess && s.command.empty()) {
    throw ConfigError("scorer " + s.name + ": external_subprocess needs 'command'");
  }
  if (s.kind == ScorerKind::kExternalHttp && s.url.empty()) {
    throw ConfigError("scorer " + s.name + ": external_http needs 'url'");
  }
  if (j.contains("density_counter")) {
    s = wrap_density_scorer(s, TokenCounter::from_json(j["density_counter"]));
    if (j.contains("name")) s.name = j["name"].get<std::string>();
  }
  return s;
}

// Parses the CLI form "kind[:key=value,...]". Recognized keys: name, base,
// alpha, sigma, seed, clamp_lo, clamp_hi, emit_density, orientation,
// processes, density (a counter scheme; wraps the scorer).
inline nlohmann::json scorer_json_from_cli(std::string_view text) {
  nlohmann::json j;
  const auto colon = text.find(':');
  j["kind"] = std::string(text.substr(0, colon));
  nlohmann::json params = nlohmann::json::object();
  if (colon != std::string_view::npos) {
    std::string_view rest = text.substr(colon + 1);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const auto item = rest.substr(0, comma);
      const auto eq = item.find('=');
      if (eq == std::string_view::npos) throw ConfigError("scorer option '" + std::string(item) + "' lacks '='");
      const std::string key(item.substr(0, eq));
      const std::string value(item.substr(eq + 1));
      try {
        if (key == "name" || key == "orientation") {
          j[key] = value;
        } else if (key == "processes") {
          j[key] = std::stoull(value);
        } else if (key == "density") {
          j["density_counter"] = value;
        } else if (key == "emit_density") {
          params[key] = value == "1" || value == "true";
        } else if (key == "seed") {
          params[key] = std::stoull(value);
        } else if (key == "clamp_lo" || key == "clamp_hi") {
          if (!params.contains("clamp")) params["clamp"] = {nullptr, nullptr};
          params["clamp"][key == "clamp_lo" ? 0 : 1] = std::stod(value);
        } else if (key == "base" || key == "alpha" || key == "sigma") {
          params[key] = std::stod(value);
        } else {
          throw ConfigError("unknown scorer option '" + key + "'");
        }
      } catch (const std::logic_error&) {
        throw ConfigError("bad value for scorer option '" + key + "': " + value);
      }
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
  }
  j["params"] = params;
  return j;
}

}  // namespace lenbias
