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
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "lenbias/corpus.hpp"
#include "lenbias/error.hpp"
#include "lenbias/io.hpp"

namespace lenbias {

// p_i: the first i segments of a document joined on both sides.
struct Passage {
  std::size_t index = 1;  // 1-based
  std::string source_text;
  std::string hypothesis_text;
  std::size_t source_tokens = 0;
  std::size_t hypothesis_tokens = 0;

  bool operator==(const Passage&) const = default;
};

struct PassageGroup {
  std::string doc_id;
  std::string lang_pair;
  std::vector<Passage> passages;

  bool operator==(const PassageGroup&) const = default;
};

struct PassageOptions {
  std::size_t max_segments = 5;
  std::size_t window_tokens = 500;
  std::string separator = " ";
};

struct PassageSuite {
  std::vector<PassageGroup> groups;
  std::size_t discarded = 0;  // documents whose final passage overflowed the window
};

inline PassageSuite build_passage_groups(const Corpus& corpus, const PassageOptions& options,
                                         const TokenCounter& counter) {
  if (options.max_segments < 1) throw ConfigError("max_segments must be >= 1");
  if (options.window_tokens < 1) throw ConfigError("window_tokens must be >= 1");
  if (corpus.documents.empty()) throw ConfigError("empty corpus");

  PassageSuite suite;
  std::vector<PassageGroup> candidates;
  std::vector<std::string> texts;
  for (const auto& doc : corpus.documents) {
    PassageGroup group{doc.doc_id, doc.lang_pair, {}};
    const std::size_t k = std::min(options.max_segments, doc.segments.size());
    std::string src;
    std::string hyp;
    for (std::size_t i = 0; i < k; ++i) {
      if (i > 0) {
        src += options.separator;
        hyp += options.separator;
      }
      src += doc.segments[i].source_text;
      hyp += doc.segments[i].target_text;
      group.passages.push_back({i + 1, src, hyp, 0, 0});
      texts.push_back(src);
      texts.push_back(hyp);
    }
    candidates.push_back(std::move(group));
  }
  counter.prime(texts);

  for (auto& group : candidates) {
    for (auto& p : group.passages) {
      p.source_tokens = counter.count(p.source_text);
      p.hypothesis_tokens = counter.count(p.hypothesis_text);
    }
    const Passage& last = group.passages.back();
    if (last.source_tokens > options.window_tokens ||
        last.hypothesis_tokens > options.window_tokens) {
      ++suite.discarded;
      continue;
    }
    suite.groups.push_back(std::move(group));
  }
  return suite;
}

// ---------------------------------------------------------------------------
// Hypothesis pairs

// Externally produced candidate translations of one source chunk.
struct Chunk {
  std::string chunk_id;
  std::string source;
  std::string reference;
  std::vector<std::string> candidates;
};

struct Candidate {
  std::string text;
  std::size_t tokens = 0;

  bool operator==(const Candidate&) const = default;
};

struct HypothesisPair {
  std::string chunk_id;
  std::string source_text;
  std::string reference_text;
  Candidate shorter;
  Candidate longer;
  double rel_diff = 0.0;  // (longer - shorter) / shorter

  bool operator==(const HypothesisPair&) const = default;
};

struct PairOptions {
  std::size_t min_tokens = 200;
  std::size_t max_tokens = 500;
};

struct PairSuite {
  std::vector<HypothesisPair> pairs;
  std::size_t dropped = 0;  // chunks whose reference length is out of bounds
};

inline double relative_length_difference(std::size_t shorter, std::size_t longer) {
  if (shorter == 0) throw DataError("relative length difference undefined for a 0-token candidate");
  return static_cast<double>(longer - shorter) / static_cast<double>(shorter);
}

inline PairSuite build_hypothesis_pairs(const std::vector<Chunk>& chunks, const PairOptions& options,
                                        const TokenCounter& counter) {
  if (options.min_tokens > options.max_tokens) {
    throw ConfigError("min_tokens must not exceed max_tokens");
  }
  std::vector<std::string> texts;
  for (const auto& c : chunks) {
    if (c.candidates.size() < 2) {
      throw DataError("chunk " + c.chunk_id + ": needs at least 2 candidates, got " +
                      std::to_string(c.candidates.size()));
    }
    for (std::size_t i = 0; i < c.candidates.size(); ++i) {
      if (utf8::trim(c.candidates[i]).empty()) {
        throw DataError("chunk " + c.chunk_id + ": candidate " + std::to_string(i) + " is empty");
      }
      texts.push_back(c.candidates[i]);
    }
    texts.push_back(c.reference);
  }
  counter.prime(texts);

  PairSuite suite;
  for (const auto& c : chunks) {
    const std::size_t ref_tokens = counter.count(c.reference);
    if (ref_tokens < options.min_tokens || ref_tokens > options.max_tokens) {
      ++suite.dropped;
      continue;
    }
    // Strict comparisons keep the first candidate in input order on ties.
    std::size_t lo = 0;
    std::size_t hi = 0;
    std::vector<std::size_t> lengths;
    for (std::size_t i = 0; i < c.candidates.size(); ++i) {
      lengths.push_back(counter.count(c.candidates[i]));
      if (lengths[i] < lengths[lo]) lo = i;
      if (lengths[i] > lengths[hi]) hi = i;
    }
    if (lengths[lo] == 0) {
      throw DataError("chunk " + c.chunk_id + ": candidate counts 0 tokens");
    }
    HypothesisPair pair;
    pair.chunk_id = c.chunk_id;
    pair.source_text = c.source;
    pair.reference_text = c.reference;
    pair.shorter = {c.candidates[lo], lengths[lo]};
    pair.longer = {c.candidates[hi], lengths[hi]};
    pair.rel_diff = relative_length_difference(lengths[lo], lengths[hi]);
    suite.pairs.push_back(std::move(pair));
  }
  return suite;
}

struct LengthBin {
  double threshold = 0.0;
  std::vector<HypothesisPair> pairs;
};

inline const std::vector<double>& default_thresholds() {
  static const std::vector<double> kThresholds = {0.025, 0.05, 0.075, 0.10, 0.125, 0.15};
  return kThresholds;
}

inline void validate_thresholds(const std::vector<double>& thresholds) {
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > 0.0)) throw ConfigError("thresholds must be > 0");
    if (i > 0 && !(thresholds[i] > thresholds[i - 1])) {
      throw ConfigError("thresholds must be strictly increasing");
    }
  }
}

// Bin t holds every pair with rel_diff >= t, so bins nest.
inline std::vector<LengthBin> bin_pairs(const std::vector<HypothesisPair>& pairs,
                                        const std::vector<double>& thresholds = default_thresholds()) {
  validate_thresholds(thresholds);
  std::vector<LengthBin> bins;
  for (const double t : thresholds) {
    LengthBin bin{t, {}};
    for (const auto& p : pairs) {
      if (p.rel_diff >= t) bin.pairs.push_back(p);
    }
    bins.push_back(std::move(bin));
  }
  return bins;
}

// ---------------------------------------------------------------------------
// JSONL serialization (stable key order)

inline nlohmann::ordered_json to_json(const PassageGroup& g) {
  nlohmann::ordered_json j;
  j["doc_id"] = g.doc_id;
  j["lang_pair"] = g.lang_pair;
  j["passages"] = nlohmann::ordered_json::array();
  for (const auto& p : g.passages) {
    nlohmann::ordered_json pj;
    pj["index"] = p.index;
    pj["source"] = p.source_text;
    pj["hypothesis"] = p.hypothesis_text;
    pj["source_tokens"] = p.source_tokens;
    pj["hypothesis_tokens"] = p.hypothesis_tokens;
    j["passages"].push_back(std::move(pj));
  }
  return j;
}

inline nlohmann::ordered_json to_json(const HypothesisPair& p) {
  nlohmann::ordered_json j;
  j["chunk_id"] = p.chunk_id;
  j["source"] = p.source_text;
  j["reference"] = p.reference_text;
  j["shorter"] = {{"text", p.shorter.text}, {"tokens", p.shorter.tokens}};
  j["longer"] = {{"text", p.longer.text}, {"tokens", p.longer.tokens}};
  j["rel_diff"] = p.rel_diff;
  return j;
}

inline PassageGroup passage_group_from_json(const nlohmann::json& j) {
  PassageGroup g;
  g.doc_id = j.at("doc_id").get<std::string>();
  g.lang_pair = j.at("lang_pair").get<std::string>();
  for (const auto& pj : j.at("passages")) {
    g.passages.push_back({pj.at("index").get<std::size_t>(), pj.at("source").get<std::string>(),
                          pj.at("hypothesis").get<std::string>(),
                          pj.at("source_tokens").get<std::size_t>(),
                          pj.at("hypothesis_tokens").get<std::size_t>()});
  }
  if (g.passages.empty()) throw DataError("passage group " + g.doc_id + " has no passages");
  return g;
}

inline HypothesisPair hypothesis_pair_from_json(const nlohmann::json& j) {
  HypothesisPair p;
  p.chunk_id = j.at("chunk_id").get<std::string>();
  p.source_text = j.at("source").get<std::string>();
  p.reference_text = j.at("reference").get<std::string>();
  p.shorter = {j.at("shorter").at("text").get<std::string>(),
               j.at("shorter").at("tokens").get<std::size_t>()};
  p.longer = {j.at("longer").at("text").get<std::string>(),
              j.at("longer").at("tokens").get<std::size_t>()};
  p.rel_diff = j.at("rel_diff").get<double>();
  return p;
}

inline Chunk chunk_from_json(const nlohmann::json& j) {
  Chunk c;
  c.chunk_id = j.at("chunk_id").get<std::string>();
  c.source = j.at("source").get<std::string>();
  c.reference = j.at("reference").get<std::string>();
  c.candidates = j.at("candidates").get<std::vector<std::string>>();
  return c;
}

template <typename T>
std::string to_jsonl(const std::vector<T>& items) {
  std::string out;
  for (const auto& item : items) out += to_json(item).dump() + '\n';
  return out;
}

// Parses one JSON object per non-empty line, reporting the line number of
// the first malformed record.
template <typename Fn>
auto parse_jsonl(std::string_view text, Fn&& from_json) {
  std::vector<decltype(from_json(nlohmann::json{}))> items;
  io::for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    if (line.empty()) return;
    try {
      items.push_back(from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": malformed record: " + e.what());
    }
  });
  return items;
}

inline std::vector<PassageGroup> load_passage_groups(const std::filesystem::path& path) {
  return parse_jsonl(io::read_file(path), passage_group_from_json);
}

inline std::vector<HypothesisPair> load_hypothesis_pairs(const std::filesystem::path& path) {
  return parse_jsonl(io::read_file(path), hypothesis_pair_from_json);
}

inline std::vector<Chunk> load_chunks(const std::filesystem::path& path) {
  return parse_jsonl(io::read_file(path), chunk_from_json);
}

}  // namespace lenbias
