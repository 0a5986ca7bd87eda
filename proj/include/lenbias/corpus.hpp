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
#include <charconv>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <json.hpp>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lenbias/error.hpp"
#include "lenbias/io.hpp"
#include "lenbias/subprocess.hpp"
#include "lenbias/utf8.hpp"

namespace lenbias {

struct Segment {
  std::string doc_id;
  std::size_t seg_index = 0;
  std::string source_text;
  std::string target_text;  // gold / post-edited translation
  std::string lang_pair;

  bool operator==(const Segment&) const = default;
};

struct Document {
  std::string doc_id;
  std::string lang_pair;
  std::vector<Segment> segments;

  bool operator==(const Document&) const = default;
};

// Documents are kept sorted by doc_id so that row order in the input file
// never affects the result.
struct Corpus {
  std::string lang_pair;
  std::vector<Document> documents;
  std::string provenance;  // free-text label; not persisted

  std::size_t segment_count() const {
    std::size_t n = 0;
    for (const auto& d : documents) n += d.segments.size();
    return n;
  }

  // Content equality; provenance is a label and is ignored.
  friend bool operator==(const Corpus& a, const Corpus& b) {
    return a.lang_pair == b.lang_pair && a.documents == b.documents;
  }
};

enum class CorpusFormat { kTsv, kJsonl };

inline CorpusFormat corpus_format_from_string(std::string_view name) {
  if (name == "tsv") return CorpusFormat::kTsv;
  if (name == "jsonl") return CorpusFormat::kJsonl;
  throw ConfigError("unknown corpus format '" + std::string(name) +
                    "' (expected tsv or jsonl)");
}

inline CorpusFormat corpus_format_from_path(const std::filesystem::path& p) {
  const auto ext = p.extension();
  if (ext == ".jsonl" || ext == ".json") return CorpusFormat::kJsonl;
  if (ext == ".tsv" || ext == ".txt") return CorpusFormat::kTsv;
  throw ConfigError("cannot infer the corpus format of " + p.string() + "; set 'format'");
}

// ---------------------------------------------------------------------------
// Token counting

enum class TokenScheme { kWhitespace, kCharacter, kExternal };

inline std::string to_string(TokenScheme s) {
  switch (s) {
    case TokenScheme::kWhitespace: return "whitespace";
    case TokenScheme::kCharacter: return "character";
    case TokenScheme::kExternal: return "external";
  }
  return "unknown";
}

inline std::size_t count_whitespace_tokens(std::string_view text) {
  std::size_t n = 0;
  bool in_token = false;
  for (std::size_t i = 0; i < text.size();) {
    const auto cp = utf8::decode_at(text, i);
    const bool space = utf8::is_space(cp.value);
    if (!space && !in_token) ++n;
    in_token = !space;
    i += cp.length;
  }
  return n;
}

inline std::size_t count_non_space_scalars(std::string_view text) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < text.size();) {
    const auto cp = utf8::decode_at(text, i);
    if (!utf8::is_space(cp.value)) ++n;
    i += cp.length;
  }
  return n;
}

// Counts tokens under one of three schemes. The external scheme runs a
// user command speaking a line protocol: one text per input line, one
// decimal count per output line. Line breaks inside a text are sent as
// spaces. External counts are memoized per counter (copies share the memo).
class TokenCounter {
 public:
  TokenCounter() = default;

  static TokenCounter whitespace() { return TokenCounter(TokenScheme::kWhitespace, {}); }
  static TokenCounter character() { return TokenCounter(TokenScheme::kCharacter, {}); }
  static TokenCounter external(std::string command,
                               std::chrono::milliseconds timeout = std::chrono::seconds(120)) {
    if (command.empty()) throw ConfigError("external token counter needs a command");
    TokenCounter c(TokenScheme::kExternal, std::move(command));
    c.timeout_ = timeout;
    return c;
  }

  TokenScheme scheme() const { return scheme_; }
  const std::string& command() const { return command_; }

  // Human-readable unit recorded in reports.
  std::string unit() const {
    switch (scheme_) {
      case TokenScheme::kWhitespace: return "whitespace tokens";
      case TokenScheme::kCharacter: return "non-whitespace Unicode scalars";
      case TokenScheme::kExternal: return "external tokens (" + command_ + ")";
    }
    return "tokens";
  }

  std::size_t count(std::string_view text) const {
    if (text.empty()) return 0;
    switch (scheme_) {
      case TokenScheme::kWhitespace: return count_whitespace_tokens(text);
      case TokenScheme::kCharacter: return count_non_space_scalars(text);
      case TokenScheme::kExternal: {
        {
          std::lock_guard lock(memo_->mutex);
          if (auto it = memo_->counts.find(std::string(text)); it != memo_->counts.end()) {
            return it->second;
          }
        }
        const std::string one(text);
        prime(std::span<const std::string>(&one, 1));
        std::lock_guard lock(memo_->mutex);
        return memo_->counts.at(one);
      }
    }
    return 0;
  }

  // Counts every not-yet-seen text in one external process. No-op for the
  // built-in schemes.
  void prime(std::span<const std::string> texts) const {
    if (scheme_ != TokenScheme::kExternal) return;
    std::vector<std::string> missing;
    {
      std::lock_guard lock(memo_->mutex);
      std::unordered_set<std::string_view> queued;
      for (const auto& t : texts) {
        if (!t.empty() && !memo_->counts.contains(t) && queued.insert(t).second) missing.push_back(t);
      }
    }
    if (missing.empty()) return;
    const auto counts = run_external(missing);
    std::lock_guard lock(memo_->mutex);
    for (std::size_t i = 0; i < missing.size(); ++i) memo_->counts[missing[i]] = counts[i];
  }

  nlohmann::json to_json() const {
    nlohmann::json j = {{"scheme", to_string(scheme_)}};
    if (scheme_ == TokenScheme::kExternal) j["command"] = command_;
    return j;
  }

  static TokenCounter from_json(const nlohmann::json& j) {
    if (j.is_string()) return from_name(j.get<std::string>(), {});
    if (!j.is_object() || !j.contains("scheme")) {
      throw ConfigError("token counter must be a string or an object with 'scheme'");
    }
    return from_name(j.at("scheme").get<std::string>(), j.value("command", std::string{}));
  }

  static TokenCounter from_name(std::string_view scheme, std::string command) {
    if (scheme == "whitespace") return whitespace();
    if (scheme == "character") return character();
    if (scheme == "external") return external(std::move(command));
    throw ConfigError("unknown token counter scheme '" + std::string(scheme) + "'");
  }

 private:
  struct Memo {
    std::mutex mutex;
    std::unordered_map<std::string, std::size_t> counts;
  };

  TokenCounter(TokenScheme scheme, std::string command)
      : scheme_(scheme), command_(std::move(command)) {}

  std::vector<std::size_t> run_external(const std::vector<std::string>& texts) const {
    Subprocess proc(command_);
    std::string payload;
    for (const auto& t : texts) {
      std::string line = t;
      std::replace(line.begin(), line.end(), '\n', ' ');
      std::replace(line.begin(), line.end(), '\r', ' ');
      payload += line;
      payload += '\n';
    }
    std::thread writer([&] {
      proc.write_all(payload);
      proc.close_stdin();
    });
    std::vector<std::size_t> counts;
    counts.reserve(texts.size());
    std::string line;
    std::string failure;
    while (counts.size() < texts.size()) {
      const auto st = proc.read_line(line, timeout_);
      if (st == Subprocess::ReadStatus::kTimeout) {
        failure = "external token counter timed out";
        break;
      }
      if (st == Subprocess::ReadStatus::kEof) {
        failure = "external token counter returned " + std::to_string(counts.size()) +
                  " counts for " + std::to_string(texts.size()) + " texts";
        break;
      }
      std::size_t value = 0;
      const auto trimmed = utf8::trim(line);
      const auto [ptr, ec] =
          std::from_chars(trimmed.data(), trimmed.data() + trimmed.size(), value);
      if (ec != std::errc{} || ptr != trimmed.data() + trimmed.size() || trimmed.empty()) {
        failure = "external token counter emitted a non-count line: '" + line + "'";
        break;
      }
      counts.push_back(value);
    }
    if (!failure.empty()) proc.kill();
    writer.join();
    const int status = proc.wait();
    if (!failure.empty()) throw ScorerError(failure);
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
      throw ScorerError("external token counter exited abnormally");
    }
    return counts;
  }

  TokenScheme scheme_ = TokenScheme::kWhitespace;
  std::string command_;
  std::chrono::milliseconds timeout_{std::chrono::seconds(120)};
  std::shared_ptr<Memo> memo_ = std::make_shared<Memo>();
};

inline std::size_t count_tokens(const TokenCounter& counter, std::string_view text) {
  return counter.count(text);
}

// ---------------------------------------------------------------------------
// Loading and saving

namespace detail {

struct RawRecord {
  Segment segment;
  std::size_t line_no;
};

inline void check_text_field(std::string_view value, std::string_view field, std::size_t line_no) {
  if (!utf8::is_valid(value)) {
    throw DataError("line " + std::to_string(line_no) + ": " + std::string(field) +
                    " is not valid UTF-8");
  }
}

inline Segment parse_tsv_row(std::string_view line, std::size_t line_no) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  if (cols.size() != 5) {
    throw DataError("line " + std::to_string(line_no) + ": malformed record, expected 5 "
                    "tab-separated fields, got " + std::to_string(cols.size()));
  }
  Segment seg;
  seg.doc_id = cols[0];
  std::size_t idx = 0;
  const auto [ptr, ec] = std::from_chars(cols[1].data(), cols[1].data() + cols[1].size(), idx);
  if (cols[1].empty() || ec != std::errc{} || ptr != cols[1].data() + cols[1].size()) {
    throw DataError("line " + std::to_string(line_no) + ": malformed record, seg_index '" +
                    std::string(cols[1]) + "' is not a non-negative integer");
  }
  seg.seg_index = idx;
  seg.lang_pair = cols[2];
  seg.source_text = cols[3];
  seg.target_text = cols[4];
  return seg;
}

inline Segment parse_jsonl_row(std::string_view line, std::size_t line_no) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("line " + std::to_string(line_no) + ": malformed record: " + e.what());
  }
  const auto require_string = [&](const char* key) {
    if (!j.is_object() || !j.contains(key) || !j[key].is_string()) {
      throw DataError("line " + std::to_string(line_no) + ": malformed record, missing string '" +
                      key + "'");
    }
    return j[key].get<std::string>();
  };
  Segment seg;
  seg.doc_id = require_string("doc_id");
  if (!j.contains("seg_index") || !j["seg_index"].is_number_unsigned()) {
    throw DataError("line " + std::to_string(line_no) +
                    ": malformed record, seg_index must be a non-negative integer");
  }
  seg.seg_index = j["seg_index"].get<std::size_t>();
  seg.lang_pair = require_string("lang_pair");
  seg.source_text = require_string("source");
  seg.target_text = require_string("target");
  return seg;
}

}  // namespace detail

// Assembles documents from unordered segment rows and checks every corpus
// invariant. `provenance` defaults to the file path.
inline Corpus assemble_corpus(std::vector<detail::RawRecord> records, std::string provenance) {
  if (records.empty()) throw DataError("no records");

  const std::string& lang = records.front().segment.lang_pair;
  std::map<std::string, std::vector<const detail::RawRecord*>> by_doc;
  for (const auto& r : records) {
    const auto& s = r.segment;
    const std::string where = "line " + std::to_string(r.line_no) + ": ";
    if (s.doc_id.empty()) throw DataError(where + "empty doc_id");
    if (s.lang_pair.empty()) throw DataError(where + "empty lang_pair");
    if (s.lang_pair != lang) {
      throw DataError(where + "mixed lang_pair in one file ('" + s.lang_pair + "' vs '" + lang +
                      "' on line " + std::to_string(records.front().line_no) + ")");
    }
    detail::check_text_field(s.source_text, "source", r.line_no);
    detail::check_text_field(s.target_text, "target", r.line_no);
    if (utf8::trim(s.source_text).empty()) throw DataError(where + "empty source text");
    if (utf8::trim(s.target_text).empty()) throw DataError(where + "empty target text");
    by_doc[s.doc_id].push_back(&r);
  }

  Corpus corpus;
  corpus.lang_pair = lang;
  corpus.provenance = std::move(provenance);
  for (auto& [doc_id, rows] : by_doc) {
    std::sort(rows.begin(), rows.end(), [](const auto* a, const auto* b) {
      return a->segment.seg_index < b->segment.seg_index;
    });
    Document doc{doc_id, lang, {}};
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& s = rows[i]->segment;
      if (i > 0 && s.seg_index == rows[i - 1]->segment.seg_index) {
        throw DataError("line " + std::to_string(rows[i]->line_no) + ": duplicate (doc_id, "
                        "seg_index) = (" + doc_id + ", " + std::to_string(s.seg_index) + ")");
      }
      if (s.seg_index != i) {
        throw DataError("document " + doc_id + ": gap in seg_index at " + std::to_string(i));
      }
      doc.segments.push_back(s);
    }
    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

inline Corpus parse_corpus(std::string_view text, CorpusFormat format, std::string provenance = {}) {
  std::vector<detail::RawRecord> records;
  io::for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    if (line.empty()) return;
    records.push_back({format == CorpusFormat::kTsv ? detail::parse_tsv_row(line, line_no)
                                                    : detail::parse_jsonl_row(line, line_no),
                       line_no});
  });
  return assemble_corpus(std::move(records), std::move(provenance));
}

inline Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  return parse_corpus(io::read_file(path), format, path.string());
}

inline std::string serialize_corpus(const Corpus& corpus, CorpusFormat format) {
  std::string out;
  for (const auto& doc : corpus.documents) {
    for (const auto& s : doc.segments) {
      if (format == CorpusFormat::kTsv) {
        for (std::string_view field : {std::string_view(s.doc_id), std::string_view(s.lang_pair),
                                       std::string_view(s.source_text),
                                       std::string_view(s.target_text)}) {
          if (field.find_first_of("\t\n\r") != std::string_view::npos) {
            throw DataError("document " + s.doc_id + " segment " + std::to_string(s.seg_index) +
                            ": tab or line break cannot be stored in TSV");
          }
        }
        out += s.doc_id + '\t' + std::to_string(s.seg_index) + '\t' + s.lang_pair + '\t' +
               s.source_text + '\t' + s.target_text + '\n';
      } else {
        nlohmann::ordered_json j;
        j["doc_id"] = s.doc_id;
        j["seg_index"] = s.seg_index;
        j["lang_pair"] = s.lang_pair;
        j["source"] = s.source_text;
        j["target"] = s.target_text;
        out += j.dump() + '\n';
      }
    }
  }
  return out;
}

inline void save_corpus(const Corpus& corpus, const std::filesystem::path& path, CorpusFormat format) {
  io::write_file_atomic(path, serialize_corpus(corpus, format));
}

}  // namespace lenbias
