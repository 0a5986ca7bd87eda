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
#include <array>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <json.hpp>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lenbias/adapter.hpp"
#include "lenbias/corpus.hpp"
#include "lenbias/error.hpp"
#include "lenbias/rng.hpp"
#include "lenbias/suite_builder.hpp"
#include "lenbias/utf8.hpp"

namespace lenbias {

enum class Severity { kMinor, kMajor };
enum class Dimension { kAccuracy, kFluency };

// Deterministic edit rules standing in for LLM-inserted errors. kAuto tries
// the rules of the requested category in a fixed order.
enum class Rule {
  kAuto,
  kNegation,               // major accuracy
  kContentWord,            // major accuracy
  kNumeral,                // minor accuracy
  kProperNoun,             // minor accuracy
  kClauseReversal,         // major fluency
  kFunctionWordDuplicate,  // minor fluency
  kDropFinalPunctuation,   // minor fluency
  kCharacterWindow,        // any category; scripts without spaces
};

inline std::string to_string(Severity s) { return s == Severity::kMinor ? "minor" : "major"; }
inline std::string to_string(Dimension d) {
  return d == Dimension::kAccuracy ? "accuracy" : "fluency";
}

inline std::string to_string(Rule r) {
  switch (r) {
    case Rule::kAuto: return "auto";
    case Rule::kNegation: return "negation";
    case Rule::kContentWord: return "content_word";
    case Rule::kNumeral: return "numeral";
    case Rule::kProperNoun: return "proper_noun";
    case Rule::kClauseReversal: return "clause_reversal";
    case Rule::kFunctionWordDuplicate: return "function_word_duplicate";
    case Rule::kDropFinalPunctuation: return "drop_final_punctuation";
    case Rule::kCharacterWindow: return "character_window";
  }
  return "unknown";
}

inline Severity severity_from_string(std::string_view s) {
  if (s == "minor") return Severity::kMinor;
  if (s == "major") return Severity::kMajor;
  throw ConfigError("unknown severity '" + std::string(s) + "'");
}

inline Dimension dimension_from_string(std::string_view s) {
  if (s == "accuracy") return Dimension::kAccuracy;
  if (s == "fluency") return Dimension::kFluency;
  throw ConfigError("unknown dimension '" + std::string(s) + "'");
}

inline Rule rule_from_string(std::string_view s) {
  for (Rule r : {Rule::kAuto, Rule::kNegation, Rule::kContentWord, Rule::kNumeral,
                 Rule::kProperNoun, Rule::kClauseReversal, Rule::kFunctionWordDuplicate,
                 Rule::kDropFinalPunctuation, Rule::kCharacterWindow}) {
    if (to_string(r) == s) return r;
  }
  throw ConfigError("unknown perturbation rule '" + std::string(s) + "'");
}

struct PerturbationSpec {
  Severity severity = Severity::kMinor;
  Dimension dimension = Dimension::kAccuracy;
  std::uint64_t seed = 0;
  Rule rule = Rule::kAuto;

  std::string category() const { return to_string(severity) + "_" + to_string(dimension); }
  bool operator==(const PerturbationSpec&) const = default;
};

// Offsets are Unicode scalar indices into the hypothesis, half-open.
// Deletions are recorded as an empty span at the deletion point.
struct MqmAnnotation {
  std::size_t start = 0;
  std::size_t end = 0;
  Severity severity = Severity::kMinor;
  Dimension dimension = Dimension::kAccuracy;
  std::string note;

  bool operator==(const MqmAnnotation&) const = default;
};

constexpr double mqm_penalty(Severity s) { return s == Severity::kMinor ? -1.0 : -5.0; }

inline double mqm_score(std::span<const MqmAnnotation> annotations) {
  double total = 0.0;
  for (const auto& a : annotations) total += mqm_penalty(a.severity);
  return total;
}

struct PerturbedGroup {
  PassageGroup base;
  PassageGroup perturbed;
  PerturbationSpec spec;
  std::vector<MqmAnnotation> annotations;
  double gold_rating = 0.0;

  bool operator==(const PerturbedGroup&) const = default;
};

// Thrown when a rule finds nothing to edit; callers may try another rule.
class RuleNotApplicable : public ConfigError {
 public:
  RuleNotApplicable(Rule rule, const std::string& why)
      : ConfigError("rule " + to_string(rule) + " not applicable: " + why), rule_(rule) {}
  Rule rule() const { return rule_; }

 private:
  Rule rule_;
};

namespace detail {

// A whitespace-delimited token; [core_begin, core_end) strips ASCII
// punctuation on both ends.
struct Word {
  std::size_t begin;
  std::size_t end;
  std::size_t core_begin;
  std::size_t core_end;
};

inline std::vector<Word> split_words(std::string_view text) {
  std::vector<Word> words;
  std::size_t i = 0;
  while (i < text.size()) {
    auto cp = utf8::decode_at(text, i);
    if (utf8::is_space(cp.value)) {
      i += cp.length;
      continue;
    }
    const std::size_t begin = i;
    while (i < text.size()) {
      cp = utf8::decode_at(text, i);
      if (utf8::is_space(cp.value)) break;
      i += cp.length;
    }
    Word w{begin, i, begin, i};
    while (w.core_begin < w.core_end &&
           std::ispunct(static_cast<unsigned char>(text[w.core_begin]))) {
      ++w.core_begin;
    }
    while (w.core_end > w.core_begin &&
           std::ispunct(static_cast<unsigned char>(text[w.core_end - 1]))) {
      --w.core_end;
    }
    words.push_back(w);
  }
  return words;
}

inline std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline bool all_ascii_alpha(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalpha(static_cast<unsigned char>(c)) != 0;
  });
}

constexpr std::array<std::string_view, 19> kAuxiliaries = {
    "is",   "was",   "are",    "were",  "will", "would", "can",  "could", "shall", "should",
    "may",  "might", "must",   "has",   "have", "had",   "does", "did",   "do"};

constexpr std::array<std::string_view, 24> kFunctionWords = {
    "the", "a",    "an",   "of",  "in",   "on",   "at",  "to",  "for", "and", "or",   "but",
    "with", "by",  "from", "as",  "that", "this", "it",  "its", "into", "than", "then", "so"};

constexpr std::array<std::string_view, 8> kDecoys = {
    "banana", "volcano", "umbrella", "elephant", "saxophone", "glacier", "carousel", "lantern"};

template <std::size_t N>
bool contains(const std::array<std::string_view, N>& list, std::string_view w) {
  return std::find(list.begin(), list.end(), w) != list.end();
}

// Result of editing the first segment: its new text and the error span in
// scalar offsets.
struct Edit {
  std::string text;
  std::size_t span_start;
  std::size_t span_end;
  std::string note;
};

inline std::size_t scalars(std::string_view s) { return utf8::length(s); }

inline Edit splice(std::string_view s, std::size_t begin, std::size_t end, std::string_view with,
                   std::string note) {
  std::string out;
  out.reserve(s.size() + with.size());
  out.append(s.substr(0, begin));
  out.append(with);
  out.append(s.substr(end));
  const std::size_t start = scalars(s.substr(0, begin));
  return {std::move(out), start, start + scalars(with), std::move(note)};
}

inline Edit apply_negation(std::string_view s, const std::vector<Word>& words, SplitMix64& rng) {
  std::vector<std::size_t> sites;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto& w = words[i];
    if (w.core_begin == w.begin && w.core_end == w.end &&
        contains(kAuxiliaries, lower_ascii(s.substr(w.begin, w.end - w.begin)))) {
      sites.push_back(i);
    }
  }
  if (sites.empty()) throw RuleNotApplicable(Rule::kNegation, "no auxiliary verb");
  const std::size_t i = sites[rng.below(sites.size())];
  const auto& aux = words[i];
  if (i + 1 < words.size() &&
      lower_ascii(s.substr(words[i + 1].core_begin,
                           words[i + 1].core_end - words[i + 1].core_begin)) == "not" &&
      words[i + 1].core_begin == words[i + 1].begin) {
    // Drop the existing "not" together with the whitespace before it.
    Edit e = splice(s, aux.end, words[i + 1].core_end, "", "negation removed");
    e.span_start = scalars(s.substr(0, aux.begin));
    e.span_end = e.span_start + scalars(s.substr(aux.begin, aux.end - aux.begin));
    return e;
  }
  Edit e = splice(s, aux.end, aux.end, " not", "negation inserted");
  e.span_start += 1;  // the span covers "not", not the space
  return e;
}

inline Edit apply_content_word(std::string_view s, const std::vector<Word>& words,
                               SplitMix64& rng) {
  std::vector<std::size_t> sites;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto core = s.substr(words[i].core_begin, words[i].core_end - words[i].core_begin);
    const auto lower = lower_ascii(core);
    if (core.size() >= 4 && all_ascii_alpha(core) && !contains(kFunctionWords, lower) &&
        !contains(kAuxiliaries, lower) && !contains(kDecoys, lower)) {
      sites.push_back(i);
    }
  }
  if (sites.empty()) throw RuleNotApplicable(Rule::kContentWord, "no content word");
  const auto& w = words[sites[rng.below(sites.size())]];
  std::string decoy(kDecoys[rng.below(kDecoys.size())]);
  if (std::isupper(static_cast<unsigned char>(s[w.core_begin]))) {
    decoy[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(decoy[0])));
  }
  return splice(s, w.core_begin, w.core_end, decoy,
                "content word '" + std::string(s.substr(w.core_begin, w.core_end - w.core_begin)) +
                    "' replaced");
}

inline Edit apply_numeral(std::string_view s, SplitMix64& rng) {
  struct Run {
    std::size_t begin, end;
  };
  std::vector<Run> runs;
  for (std::size_t i = 0; i < s.size();) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
    if (j - i <= 18) runs.push_back({i, j});
    i = j;
  }
  if (runs.empty()) throw RuleNotApplicable(Rule::kNumeral, "no digit present");
  const Run r = runs[rng.below(runs.size())];
  const std::string digits(s.substr(r.begin, r.end - r.begin));
  const std::uint64_t value = std::stoull(digits);
  const bool down = value > 0 && rng.below(2) == 1;
  std::string next = std::to_string(down ? value - 1 : value + 1);
  if (digits.size() > 1 && digits[0] == '0' && next.size() < digits.size()) {
    next.insert(0, digits.size() - next.size(), '0');
  }
  return splice(s, r.begin, r.end, next, "numeral " + digits + " changed to " + next);
}

inline Edit apply_proper_noun(std::string_view s, const std::vector<Word>& words,
                              SplitMix64& rng) {
  std::vector<std::size_t> sites;
  for (std::size_t i = 1; i < words.size(); ++i) {
    const auto core = s.substr(words[i].core_begin, words[i].core_end - words[i].core_begin);
    const char prev_last = s[words[i - 1].end - 1];
    if (core.size() >= 3 && all_ascii_alpha(core) &&
        std::isupper(static_cast<unsigned char>(core[0])) && prev_last != '.' &&
        prev_last != '!' && prev_last != '?') {
      sites.push_back(i);
    }
  }
  if (sites.empty()) throw RuleNotApplicable(Rule::kProperNoun, "no mid-sentence capitalized word");
  const auto& w = words[sites[rng.below(sites.size())]];
  const std::size_t len = w.core_end - w.core_begin;
  const std::size_t pos = w.core_begin + 1 + rng.below(len - 1);
  const char c = s[pos];
  const bool upper = std::isupper(static_cast<unsigned char>(c)) != 0;
  const char base = upper ? 'A' : 'a';
  const char sub = static_cast<char>(base + ((c - base) + 1) % 26);
  return splice(s, pos, pos + 1, std::string(1, sub),
                "letter substituted in '" + std::string(s.substr(w.core_begin, len)) + "'");
}

inline Edit apply_clause_reversal(std::string_view s, const std::vector<Word>& words) {
  std::size_t clause_len = (words.size() + 1) / 2;
  for (std::size_t i = 1; i + 1 < words.size(); ++i) {
    if (s[words[i].end - 1] == ',') {
      clause_len = i + 1;
      break;
    }
  }
  std::vector<std::string> cores;
  for (std::size_t i = 0; i < clause_len; ++i) {
    cores.emplace_back(s.substr(words[i].core_begin, words[i].core_end - words[i].core_begin));
  }
  std::vector<std::string> reversed(cores.rbegin(), cores.rend());
  if (reversed == cores) throw RuleNotApplicable(Rule::kClauseReversal, "clause is a palindrome");
  // Cores move, surrounding punctuation and whitespace stay in place.
  std::string out;
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < clause_len; ++i) {
    out.append(s.substr(cursor, words[i].core_begin - cursor));
    out.append(reversed[i]);
    cursor = words[i].core_end;
  }
  out.append(s.substr(cursor));
  const std::size_t start = scalars(s.substr(0, words[0].begin));
  const std::size_t end = scalars(out.substr(0, words[clause_len - 1].end));
  return {std::move(out), start, end,
          "word order reversed in first " + std::to_string(clause_len) + " words"};
}

inline Edit apply_function_word_duplicate(std::string_view s, const std::vector<Word>& words,
                                          SplitMix64& rng) {
  std::vector<std::size_t> sites;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto& w = words[i];
    if (w.core_begin == w.begin && w.core_end == w.end &&
        contains(kFunctionWords, lower_ascii(s.substr(w.begin, w.end - w.begin)))) {
      sites.push_back(i);
    }
  }
  if (sites.empty()) throw RuleNotApplicable(Rule::kFunctionWordDuplicate, "no function word");
  const auto& w = words[sites[rng.below(sites.size())]];
  const std::string word(s.substr(w.begin, w.end - w.begin));
  Edit e = splice(s, w.end, w.end, " " + word, "function word '" + word + "' duplicated");
  e.span_start += 1;
  return e;
}

inline bool is_final_punctuation(char32_t c) {
  return c == U'.' || c == U'!' || c == U'?' || c == U'。' || c == U'！' ||
         c == U'？';
}

inline Edit apply_drop_final_punctuation(std::string_view s) {
  const auto trimmed = utf8::trim(s);
  const auto cps = utf8::decode(trimmed);
  if (cps.empty() || !is_final_punctuation(cps.back().value)) {
    throw RuleNotApplicable(Rule::kDropFinalPunctuation, "no sentence-final punctuation");
  }
  const std::size_t begin =
      static_cast<std::size_t>(trimmed.data() - s.data()) + cps.back().offset;
  return splice(s, begin, begin + cps.back().length, "", "sentence-final punctuation dropped");
}

// Edits a 3-scalar window of non-space characters.
inline Edit apply_character_window(std::string_view s, Severity severity, Dimension dimension,
                                   SplitMix64& rng) {
  const auto cps = utf8::decode(s);
  std::vector<std::size_t> windows;
  for (std::size_t i = 0; i + 3 <= cps.size(); ++i) {
    if (utf8::is_space(cps[i].value) || utf8::is_space(cps[i + 1].value) ||
        utf8::is_space(cps[i + 2].value)) {
      continue;
    }
    if (dimension == Dimension::kFluency && severity == Severity::kMajor &&
        cps[i].value == cps[i + 2].value) {
      continue;  // reversal would be a no-op
    }
    windows.push_back(i);
  }
  if (windows.empty()) throw RuleNotApplicable(Rule::kCharacterWindow, "fewer than 3 characters");
  const std::size_t w = windows[rng.below(windows.size())];
  const std::size_t begin = cps[w].offset;
  const std::size_t end = cps[w + 2].offset + cps[w + 2].length;
  const auto glyph = [&](std::size_t k) { return std::string(s.substr(cps[k].offset, cps[k].length)); };

  if (severity == Severity::kMajor && dimension == Dimension::kAccuracy) {
    return splice(s, begin, end, kDecoys[rng.below(kDecoys.size())], "character window replaced");
  }
  if (severity == Severity::kMajor && dimension == Dimension::kFluency) {
    return splice(s, begin, end, glyph(w + 2) + glyph(w + 1) + glyph(w), "character window reversed");
  }
  if (severity == Severity::kMinor && dimension == Dimension::kAccuracy) {
    char32_t c = cps[w + 1].value + 1;
    if (c >= 0xD800 && c <= 0xDFFF) c = 0xE000;
    if (c > 0x10FFFF) c = 0x21;
    return splice(s, cps[w + 1].offset, cps[w + 1].offset + cps[w + 1].length, utf8::encode(c),
                  "character substituted");
  }
  const std::string dup = glyph(w + 1);
  const std::size_t at = cps[w + 1].offset + cps[w + 1].length;
  return splice(s, at, at, dup, "character duplicated");
}

inline bool rule_matches(Rule rule, Severity sev, Dimension dim) {
  switch (rule) {
    case Rule::kAuto:
    case Rule::kCharacterWindow: return true;
    case Rule::kNegation:
    case Rule::kContentWord: return sev == Severity::kMajor && dim == Dimension::kAccuracy;
    case Rule::kNumeral:
    case Rule::kProperNoun: return sev == Severity::kMinor && dim == Dimension::kAccuracy;
    case Rule::kClauseReversal: return sev == Severity::kMajor && dim == Dimension::kFluency;
    case Rule::kFunctionWordDuplicate:
    case Rule::kDropFinalPunctuation: return sev == Severity::kMinor && dim == Dimension::kFluency;
  }
  return false;
}

inline std::vector<Rule> rules_for(Severity sev, Dimension dim) {
  if (sev == Severity::kMajor && dim == Dimension::kAccuracy) return {Rule::kNegation, Rule::kContentWord};
  if (sev == Severity::kMinor && dim == Dimension::kAccuracy) return {Rule::kNumeral, Rule::kProperNoun};
  if (sev == Severity::kMajor && dim == Dimension::kFluency) return {Rule::kClauseReversal};
  return {Rule::kFunctionWordDuplicate, Rule::kDropFinalPunctuation};
}

inline Edit apply_rule(Rule rule, std::string_view s, const std::vector<Word>& words,
                       const PerturbationSpec& spec, SplitMix64& rng) {
  if (rule != Rule::kCharacterWindow && rule != Rule::kNumeral &&
      rule != Rule::kDropFinalPunctuation && words.size() < 3) {
    throw RuleNotApplicable(rule, "fewer than 3 word tokens");
  }
  switch (rule) {
    case Rule::kNegation: return apply_negation(s, words, rng);
    case Rule::kContentWord: return apply_content_word(s, words, rng);
    case Rule::kNumeral: return apply_numeral(s, rng);
    case Rule::kProperNoun: return apply_proper_noun(s, words, rng);
    case Rule::kClauseReversal: return apply_clause_reversal(s, words);
    case Rule::kFunctionWordDuplicate: return apply_function_word_duplicate(s, words, rng);
    case Rule::kDropFinalPunctuation: return apply_drop_final_punctuation(s);
    case Rule::kCharacterWindow:
      return apply_character_window(s, spec.severity, spec.dimension, rng);
    case Rule::kAuto: break;
  }
  throw ConfigError("auto is not a concrete rule");
}

// Rebuilds every passage with the first segment replaced by `new_first`.
inline PassageGroup replace_first_segment(const PassageGroup& base, std::string_view new_first,
                                          const TokenCounter& counter) {
  const std::size_t first_len = base.passages.front().hypothesis_text.size();
  PassageGroup out = base;
  std::vector<std::string> texts;
  for (auto& p : out.passages) {
    p.hypothesis_text = std::string(new_first) + p.hypothesis_text.substr(first_len);
    texts.push_back(p.hypothesis_text);
  }
  counter.prime(texts);
  for (auto& p : out.passages) p.hypothesis_tokens = counter.count(p.hypothesis_text);
  return out;
}

}  // namespace detail

// Inserts exactly one error into the first segment of every passage in the
// group. Pure in (group, spec); the random stream is keyed by the seed and
// the document id. Token counts of the perturbed passages use `counter`.
inline PerturbedGroup apply_perturbation(const PassageGroup& group, const PerturbationSpec& spec,
                                         const TokenCounter& counter = TokenCounter::whitespace()) {
  if (group.passages.empty()) throw ConfigError("passage group " + group.doc_id + " is empty");
  if (!detail::rule_matches(spec.rule, spec.severity, spec.dimension)) {
    throw ConfigError("rule " + to_string(spec.rule) + " does not produce a " + spec.category() +
                      " error");
  }
  const std::string& first = group.passages.front().hypothesis_text;
  const auto words = detail::split_words(first);
  SplitMix64 rng(spec.seed, group.lang_pair + '\x1f' + group.doc_id);

  std::optional<detail::Edit> edit;
  Rule used = spec.rule;
  if (spec.rule != Rule::kAuto) {
    edit = detail::apply_rule(spec.rule, first, words, spec, rng);
  } else if (words.size() < 3) {
    used = Rule::kCharacterWindow;
    edit = detail::apply_rule(used, first, words, spec, rng);
  } else {
    std::string reasons;
    for (Rule r : detail::rules_for(spec.severity, spec.dimension)) {
      try {
        edit = detail::apply_rule(r, first, words, spec, rng);
        used = r;
        break;
      } catch (const RuleNotApplicable& e) {
        reasons += reasons.empty() ? e.what() : std::string("; ") + e.what();
      }
    }
    if (!edit) {
      // No word-level rule fits; a character-level edit of the same category still does.
      try {
        used = Rule::kCharacterWindow;
        edit = detail::apply_rule(used, first, words, spec, rng);
      } catch (const RuleNotApplicable& e) {
        throw RuleNotApplicable(Rule::kAuto, "document " + group.doc_id + ": " + reasons + "; " + e.what());
      }
    }
  }

  PerturbedGroup out;
  out.base = group;
  out.perturbed = detail::replace_first_segment(group, edit->text, counter);
  out.spec = spec;
  out.annotations.push_back({edit->span_start, edit->span_end, spec.severity, spec.dimension,
                             to_string(used) + ": " + edit->note});
  out.gold_rating = mqm_score(out.annotations);
  return out;
}

// Checks a candidate edit of the final passage against the base group:
// only the first-segment region may change and it must change.
inline PerturbedGroup validate_external_edit(const PassageGroup& group, const PerturbationSpec& spec,
                                             const std::string& edited_final,
                                             const std::optional<std::pair<std::size_t, std::size_t>>& span,
                                             const std::string& note, const TokenCounter& counter) {
  const std::string& first = group.passages.front().hypothesis_text;
  const std::string& final_text = group.passages.back().hypothesis_text;
  const std::string_view suffix = std::string_view(final_text).substr(first.size());
  if (edited_final.size() < suffix.size() ||
      std::string_view(edited_final).substr(edited_final.size() - suffix.size()) != suffix) {
    throw ScorerError("document " + group.doc_id + ": edit outside first segment");
  }
  const std::string new_first = edited_final.substr(0, edited_final.size() - suffix.size());
  if (new_first == first || !span) {
    throw ScorerError("document " + group.doc_id + ": no error inserted");
  }
  const std::size_t first_len = utf8::length(new_first);
  if (span->first > span->second || span->second > first_len) {
    throw ScorerError("document " + group.doc_id + ": span [" + std::to_string(span->first) + ", " +
                      std::to_string(span->second) + "] lies outside the first segment");
  }
  if (!utf8::is_valid(new_first)) {
    throw ScorerError("document " + group.doc_id + ": edited text is not valid UTF-8");
  }
  PerturbedGroup out;
  out.base = group;
  out.perturbed = detail::replace_first_segment(group, new_first, counter);
  out.spec = spec;
  out.annotations.push_back({span->first, span->second, spec.severity, spec.dimension, note});
  out.gold_rating = mqm_score(out.annotations);
  return out;
}

// Runs groups through an external perturbation adapter. Request line:
// {"id","text","severity","dimension"} where text is the final passage's
// hypothesis; response line: {"id","text","span":[start,end],"note"}.
inline std::vector<PerturbedGroup> external_perturb(
    const std::string& adapter_command, std::span<const PassageGroup> groups,
    const PerturbationSpec& spec, const TokenCounter& counter = TokenCounter::whitespace(),
    std::chrono::milliseconds timeout = std::chrono::seconds(120)) {
  std::vector<std::string> lines;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (groups[i].passages.empty()) throw ConfigError("passage group " + groups[i].doc_id + " is empty");
    nlohmann::ordered_json req;
    req["id"] = "g" + std::to_string(i);
    req["text"] = groups[i].passages.back().hypothesis_text;
    req["severity"] = to_string(spec.severity);
    req["dimension"] = to_string(spec.dimension);
    ids.push_back(req["id"].get<std::string>());
    lines.push_back(req.dump());
  }
  const auto responses = exchange_lines(adapter_command, lines, ids, timeout, "perturbation adapter");

  std::vector<PerturbedGroup> out;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto& r = responses[i];
    if (!r.contains("text") || !r["text"].is_string()) {
      throw ScorerError("perturbation response " + ids[i] + " lacks a text field");
    }
    std::optional<std::pair<std::size_t, std::size_t>> span;
    if (r.contains("span") && !r["span"].is_null()) {
      const auto& s = r["span"];
      if (!s.is_array() || s.size() != 2 || !s[0].is_number_unsigned() || !s[1].is_number_unsigned()) {
        throw ScorerError("perturbation response " + ids[i] + " has a malformed span");
      }
      span = std::make_pair(s[0].get<std::size_t>(), s[1].get<std::size_t>());
    }
    const std::string note = r.contains("note") && r["note"].is_string() ? r["note"].get<std::string>() : "";
    out.push_back(validate_external_edit(groups[i], spec, r["text"].get<std::string>(), span, note, counter));
  }
  return out;
}

inline PerturbedGroup external_perturb(const std::string& adapter_command, const PassageGroup& group,
                                       const PerturbationSpec& spec,
                                       const TokenCounter& counter = TokenCounter::whitespace(),
                                       std::chrono::milliseconds timeout = std::chrono::seconds(120)) {
  return external_perturb(adapter_command, std::span<const PassageGroup>(&group, 1), spec, counter,
                          timeout)
      .front();
}

// ---------------------------------------------------------------------------
// JSONL

inline nlohmann::ordered_json to_json(const MqmAnnotation& a) {
  nlohmann::ordered_json j;
  j["start"] = a.start;
  j["end"] = a.end;
  j["severity"] = to_string(a.severity);
  j["dimension"] = to_string(a.dimension);
  j["note"] = a.note;
  return j;
}

inline MqmAnnotation mqm_annotation_from_json(const nlohmann::json& j) {
  MqmAnnotation a;
  a.start = j.at("start").get<std::size_t>();
  a.end = j.at("end").get<std::size_t>();
  a.severity = severity_from_string(j.at("severity").get<std::string>());
  a.dimension = dimension_from_string(j.at("dimension").get<std::string>());
  a.note = j.value("note", std::string{});
  return a;
}

inline nlohmann::ordered_json to_json(const PerturbedGroup& g) {
  nlohmann::ordered_json j;
  j["category"] = g.spec.category();
  j["rule"] = to_string(g.spec.rule);
  j["seed"] = g.spec.seed;
  j["gold_rating"] = g.gold_rating;
  j["annotations"] = nlohmann::ordered_json::array();
  for (const auto& a : g.annotations) j["annotations"].push_back(to_json(a));
  j["base"] = to_json(g.base);
  j["perturbed"] = to_json(g.perturbed);
  return j;
}

inline PerturbedGroup perturbed_group_from_json(const nlohmann::json& j) {
  PerturbedGroup g;
  const auto category = j.at("category").get<std::string>();
  const auto sep = category.find('_');
  if (sep == std::string::npos) throw DataError("malformed category '" + category + "'");
  g.spec.severity = severity_from_string(category.substr(0, sep));
  g.spec.dimension = dimension_from_string(category.substr(sep + 1));
  g.spec.rule = rule_from_string(j.at("rule").get<std::string>());
  g.spec.seed = j.at("seed").get<std::uint64_t>();
  g.gold_rating = j.at("gold_rating").get<double>();
  for (const auto& a : j.at("annotations")) g.annotations.push_back(mqm_annotation_from_json(a));
  g.base = passage_group_from_json(j.at("base"));
  g.perturbed = passage_group_from_json(j.at("perturbed"));
  return g;
}

}  // namespace lenbias
