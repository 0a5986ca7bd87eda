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
#include <unistd.h>

#include <algorithm>
#include <string>
#include <vector>

#include "lenbias/corpus.hpp"
#include "test_support.hpp"

namespace lenbias {
namespace {

using testing::TempDir;

std::string two_doc_tsv() {
  std::string out;
  for (const char* doc : {"d1", "d2"}) {
    for (int i = 0; i < 5; ++i) {
      out += std::string(doc) + "\t" + std::to_string(i) + "\ten-de\tSource " + std::to_string(i) + ".\tZiel " +
             std::to_string(i) + ".\n";
    }
  }
  return out;
}

std::string error_of(const std::string& text, CorpusFormat format = CorpusFormat::kTsv) {
  try {
    parse_corpus(text, format);
  } catch (const DataError& e) {
    return e.what();
  }
  return "no error";
}

TEST(CorpusTest, TwoDocumentsOfFiveSegments) {
  const Corpus c = parse_corpus(two_doc_tsv(), CorpusFormat::kTsv);
  ASSERT_EQ(c.documents.size(), 2u);
  EXPECT_EQ(c.documents[0].segments.size(), 5u);
  EXPECT_EQ(c.documents[1].segments.size(), 5u);
  EXPECT_EQ(c.segment_count(), 10u);
  EXPECT_EQ(c.lang_pair, "en-de");
  EXPECT_EQ(c.documents[1].segments[3].target_text, "Ziel 3.");
}

TEST(CorpusTest, EmptyFileHasNoRecords) {
  EXPECT_EQ(error_of(""), "no records");
  EXPECT_EQ(error_of("\n\n", CorpusFormat::kJsonl), "no records");
}

TEST(CorpusTest, GapInSegIndex) {
  const std::string text = "d\t0\ten-de\ta\tb\nd\t1\ten-de\ta\tb\nd\t3\ten-de\ta\tb\n";
  EXPECT_EQ(error_of(text), "document d: gap in seg_index at 2");
}

TEST(CorpusTest, RejectsInvariantViolations) {
  EXPECT_NE(error_of("d\t0\ten-de\ta\tb\nd\t0\ten-de\tc\td\n").find("duplicate (doc_id, seg_index)"),
            std::string::npos);
  EXPECT_NE(error_of("d\t0\ten-de\ta\tb\ne\t0\ten-fr\ta\tb\n").find("mixed lang_pair"), std::string::npos);
  EXPECT_NE(error_of("d\t0\ten-de\t \xC2\xA0\tb\n").find("empty source text"), std::string::npos);
  EXPECT_NE(error_of("d\t0\ten-de\ta\t\n").find("empty target text"), std::string::npos);
  EXPECT_NE(error_of("d\t0\ten-de\ta\xFF\tb\n").find("not valid UTF-8"), std::string::npos);
  EXPECT_NE(error_of("d\t0\ten-de\ta\n").find("line 1: malformed record"), std::string::npos);
  EXPECT_NE(error_of("d\tx\ten-de\ta\tb\n").find("seg_index"), std::string::npos);
  EXPECT_NE(error_of("{\"doc_id\": \"d\"}\n", CorpusFormat::kJsonl).find("malformed record"), std::string::npos);
  EXPECT_NE(error_of("{nope\n", CorpusFormat::kJsonl).find("line 1: malformed record"), std::string::npos);
}

TEST(CorpusTest, JsonlAndTsvAgree) {
  const Corpus tsv = parse_corpus(two_doc_tsv(), CorpusFormat::kTsv);
  const Corpus jsonl = parse_corpus(serialize_corpus(tsv, CorpusFormat::kJsonl), CorpusFormat::kJsonl);
  EXPECT_EQ(tsv, jsonl);
}

TEST(CorpusTest, MultiScriptRoundTripIsByteIdentical) {
  const std::string cjk = "\xE6\x88\x91\xE4\xBB\xAC\xE5\x9C\xA8\xE5\x8C\x97\xE4\xBA\xAC\xE3\x80\x82";
  const std::string arabic = "\xD9\x85\xD8\xB1\xD8\xAD\xD8\xA8\xD8\xA7 \xD8\xA8\xD8\xA7\xD9\x84\xD8\xB9\xD8\xA7\xD9\x84\xD9\x85";
  const std::string text = "d\t0\ten-zh\t" + arabic + "\t" + cjk + "\n";
  TempDir tmp;
  for (const auto format : {CorpusFormat::kTsv, CorpusFormat::kJsonl}) {
    const Corpus c = parse_corpus(text, CorpusFormat::kTsv);
    const auto path = tmp / (format == CorpusFormat::kTsv ? "c.tsv" : "c.jsonl");
    save_corpus(c, path, format);
    const Corpus back = load_corpus(path, format);
    EXPECT_EQ(back, c);
    EXPECT_EQ(back.documents[0].segments[0].target_text, cjk);
    EXPECT_EQ(back.documents[0].segments[0].source_text, arabic);
    EXPECT_EQ(back.provenance, path.string());
  }
}

TEST(CorpusTest, WriteToReadOnlyPathIsIoError) {
  if (::geteuid() == 0) {
    // root ignores directory permissions; use a path under a regular file.
    TempDir tmp;
    io::write_file_atomic(tmp / "file", "x");
    EXPECT_THROW(save_corpus(parse_corpus(two_doc_tsv(), CorpusFormat::kTsv), tmp / "file" / "c.tsv",
                             CorpusFormat::kTsv),
                 IoError);
    return;
  }
  TempDir tmp;
  std::filesystem::permissions(tmp.path(), std::filesystem::perms::owner_read | std::filesystem::perms::owner_exec);
  EXPECT_THROW(save_corpus(parse_corpus(two_doc_tsv(), CorpusFormat::kTsv), tmp / "c.tsv", CorpusFormat::kTsv),
               IoError);
  std::filesystem::permissions(tmp.path(), std::filesystem::perms::owner_all);
}

TEST(CorpusTest, MissingFileIsIoError) {
  EXPECT_THROW(load_corpus("/nonexistent/corpus.tsv", CorpusFormat::kTsv), IoError);
}

TEST(CorpusTest, TsvCannotStoreTabs) {
  Corpus c = parse_corpus("d\t0\ten-de\ta\tb\n", CorpusFormat::kTsv);
  c.documents[0].segments[0].source_text = "a\tb";
  EXPECT_THROW(serialize_corpus(c, CorpusFormat::kTsv), DataError);
  EXPECT_NO_THROW(serialize_corpus(c, CorpusFormat::kJsonl));
}

TEST(CorpusTest, FormatFromPath) {
  EXPECT_EQ(corpus_format_from_path("x/y.tsv"), CorpusFormat::kTsv);
  EXPECT_EQ(corpus_format_from_path("y.jsonl"), CorpusFormat::kJsonl);
  EXPECT_THROW(corpus_format_from_path("y.csv"), ConfigError);
}

// Property: save/load is the identity and row order does not matter.
TEST(CorpusProperty, RoundTripAndShuffleInvariance) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    SplitMix64 rng(seed);
    const std::size_t docs = 1 + rng.below(6);
    const std::size_t segs = 1 + rng.below(6);
    const std::string tsv = testing::generated_tsv(docs, segs, "en-xx", seed);
    const Corpus c = parse_corpus(tsv, CorpusFormat::kTsv);
    for (const auto format : {CorpusFormat::kTsv, CorpusFormat::kJsonl}) {
      EXPECT_EQ(parse_corpus(serialize_corpus(c, format), format), c);
    }
    std::vector<std::string> rows;
    io::for_each_line(tsv, [&](std::string_view line, std::size_t) {
      if (!line.empty()) rows.emplace_back(line);
    });
    for (std::size_t i = rows.size(); i > 1; --i) std::swap(rows[i - 1], rows[rng.below(i)]);
    std::string shuffled;
    for (const auto& r : rows) shuffled += r + "\n";
    EXPECT_EQ(parse_corpus(shuffled, CorpusFormat::kTsv), c) << "seed " << seed;
  }
}

TEST(TokenCounterTest, HandCountedExamples) {
  const auto ws = TokenCounter::whitespace();
  const auto ch = TokenCounter::character();
  EXPECT_EQ(count_tokens(ws, "a b  c"), 3u);
  EXPECT_EQ(count_tokens(ws, ""), 0u);
  EXPECT_EQ(count_tokens(ch, ""), 0u);
  EXPECT_EQ(count_tokens(ch, "ab c"), 3u);
  EXPECT_EQ(count_tokens(ws, "a\xE3\x80\x80" "b"), 2u);  // ideographic space separates
  EXPECT_EQ(count_tokens(ch, "\xE4\xB8\xAD\xE6\x96\x87 x"), 3u);
  EXPECT_EQ(ws.unit(), "whitespace tokens");
}

TEST(TokenCounterTest, ExternalCounterMatchesWhitespace) {
  const auto ext = TokenCounter::external(testing::fake_adapter("count"));
  const std::vector<std::string> texts = {"one two three", "a", "x y\nz w"};
  ext.prime(texts);
  EXPECT_EQ(ext.count("one two three"), 3u);
  EXPECT_EQ(ext.count("a"), 1u);
  EXPECT_EQ(ext.count("x y\nz w"), 4u);  // newlines travel as spaces
  EXPECT_EQ(ext.count(""), 0u);
  EXPECT_EQ(ext.count("not primed yet"), 3u);
}

TEST(TokenCounterTest, JsonRoundTrip) {
  const auto ext = TokenCounter::external("my-tokenizer --flag");
  const auto back = TokenCounter::from_json(ext.to_json());
  EXPECT_EQ(back.scheme(), TokenScheme::kExternal);
  EXPECT_EQ(back.command(), "my-tokenizer --flag");
  EXPECT_EQ(TokenCounter::from_json("character").scheme(), TokenScheme::kCharacter);
  EXPECT_THROW(TokenCounter::from_json("bpe"), ConfigError);
}

// Property: appending text never lowers the count for built-in schemes.
TEST(TokenCounterProperty, ConcatenationIsMonotone) {
  SplitMix64 rng(99);
  for (int i = 0; i < 200; ++i) {
    const std::string a = testing::random_sentence(rng, 0, 8);
    const std::string b = testing::random_sentence(rng, 0, 8);
    for (const auto& c : {TokenCounter::whitespace(), TokenCounter::character()}) {
      EXPECT_GE(count_tokens(c, a + " " + b), count_tokens(c, a));
    }
  }
}

}  // namespace
}  // namespace lenbias
