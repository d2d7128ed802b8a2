// Copyright 2026 The R2D2 Engine Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "r2d2/span_annotator.h"

#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "r2d2/passage_store.h"
#include "test_util.h"

namespace r2d2 {
namespace {

TokenSeq Seq(const std::vector<std::string>& tokens) {
  TokenSeq out;
  uint32_t pos = 0;
  for (const std::string& t : tokens) {
    out.tokens.push_back(t);
    out.char_spans.push_back({pos, static_cast<uint32_t>(pos + t.size())});
    pos += static_cast<uint32_t>(t.size()) + 1;
  }
  return out;
}

TokenSeq RandomSeq(std::mt19937_64& rng, size_t len, int vocab) {
  std::vector<std::string> t;
  for (size_t i = 0; i < len; ++i) t.push_back("w" + std::to_string(rng() % vocab));
  return Seq(t);
}

// Independent reference: F1 via F1Overlap over every span, keeping the
// highest F1, then the shorter span, then the earlier start.
std::optional<MatchSpan> Reference(const TokenSeq& p, const TokenSeq& a) {
  std::optional<MatchSpan> best;
  for (size_t len = 1; len <= p.size(); ++len) {
    for (size_t s = 0; s + len <= p.size(); ++s) {
      const double f1 = F1Overlap(std::span(p.tokens).subspan(s, len), a.tokens);
      if (f1 > 0 && (!best || f1 > best->f1 + 1e-12)) best = MatchSpan{s, s + len - 1, f1};
    }
  }
  return best;
}

TEST(TokenizeTest, Rules) {
  const TokenSeq t = TokenizeSimple("Plzeň, 2021");
  EXPECT_EQ(t.tokens, (std::vector<std::string>{"plzeň", ",", "2021"}));
  EXPECT_EQ(t.char_spans[0], (CharSpan{0, 6}));  // ň is two bytes
  EXPECT_EQ(t.char_spans[1], (CharSpan{6, 7}));
  EXPECT_EQ(t.char_spans[2], (CharSpan{8, 12}));
  EXPECT_TRUE(TokenizeSimple("").empty());
  EXPECT_EQ(TokenizeSimple("a-b").tokens, (std::vector<std::string>{"a", "-", "b"}));
  EXPECT_EQ(TokenizeSimple("ŽLUŤOUČKÝ Kůň").tokens,
            (std::vector<std::string>{"žluťoučký", "kůň"}));
  EXPECT_EQ(TokenizeSimple("  x\t\ny  ").tokens, (std::vector<std::string>{"x", "y"}));
}

TEST(TokenizeTest, OffsetsAscendAndSliceSource) {
  const std::string text = "Hello, wörld!! (it's) 3.14";
  const TokenSeq t = TokenizeSimple(text);
  uint32_t last = 0;
  for (size_t i = 0; i < t.size(); ++i) {
    EXPECT_GE(t.char_spans[i].begin, last);
    EXPECT_LT(t.char_spans[i].begin, t.char_spans[i].end);
    last = t.char_spans[i].end;
    const std::string slice = text.substr(t.char_spans[i].begin, t.char_spans[i].end - t.char_spans[i].begin);
    EXPECT_EQ(TokenizeSimple(slice).tokens, std::vector<std::string>{t.tokens[i]});
  }
}

TEST(F1Test, Values) {
  const std::vector<std::string> ab = {"a", "b"}, bc = {"b", "c"}, xy = {"x", "y"};
  EXPECT_EQ(F1Overlap(ab, ab), 1.0);
  EXPECT_EQ(F1Overlap(ab, bc), 0.5);
  EXPECT_EQ(F1Overlap(ab, xy), 0.0);
  // Bag semantics: one shared "a" only.
  const std::vector<std::string> aa = {"a", "a"}, a = {"a"};
  EXPECT_DOUBLE_EQ(F1Overlap(aa, a), 2.0 / 3);
  EXPECT_CODE(ErrorCode::kInvalidArgument, F1Overlap(std::vector<std::string>{}, a));
}

TEST(ExactMatchTest, SlidingWindows) {
  EXPECT_EQ(ExactMatchSpans(Seq({"x", "b", "y"}), Seq({"b"})).size(), 1u);
  const auto rep = ExactMatchSpans(Seq({"a", "a", "a"}), Seq({"a", "a"}));
  ASSERT_EQ(rep.size(), 2u);
  EXPECT_EQ(rep[0], (MatchSpan{0, 1, 1.0}));
  EXPECT_EQ(rep[1], (MatchSpan{1, 2, 1.0}));
  EXPECT_TRUE(ExactMatchSpans(Seq({"a"}), Seq({"b"})).empty());
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const TokenSeq p = RandomSeq(rng, 30, 4);
    const TokenSeq a = RandomSeq(rng, 1 + rng() % 2, 4);
    for (const MatchSpan& m : ExactMatchSpans(p, a)) {
      EXPECT_EQ(F1Overlap(std::span(p.tokens).subspan(m.start, m.length()), a.tokens), 1.0);
    }
  }
}

TEST(SpanLengthBoundTest, Values) {
  EXPECT_EQ(SpanLengthBound(2, 2, 1), 6.0);
  EXPECT_EQ(SpanLengthBound(3, 3, 3), 3.0);
  EXPECT_CODE(ErrorCode::kInvalidArgument, SpanLengthBound(2, 2, 0));
  EXPECT_CODE(ErrorCode::kInvalidArgument, SpanLengthBound(2, 2, 3));
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const size_t a = 1 + rng() % 10;
    const size_t t = 1 + rng() % 20;
    const size_t s = 1 + rng() % std::min(a, t);
    EXPECT_GE(SpanLengthBound(t, a, s), static_cast<double>(t));
  }
}

TEST(SoftMatchTest, HandCases) {
  const auto m = SoftMatch(Seq({"x", "b", "y"}), Seq({"b", "c"}));
  ASSERT_TRUE(m);
  EXPECT_EQ(m->start, 1u);
  EXPECT_EQ(m->end, 1u);
  EXPECT_DOUBLE_EQ(m->f1, 2.0 / 3);
  EXPECT_FALSE(SoftMatch(Seq({"x", "y"}), Seq({"b"})));
  EXPECT_FALSE(SoftMatchBruteForce(Seq({"x", "y"}), Seq({"b"})));
  const auto single = SoftMatchBruteForce(Seq({"b"}), Seq({"b", "c"}));
  ASSERT_TRUE(single);
  EXPECT_EQ(single->start, 0u);
  // Two single tokens and the span covering both all score 0.5: the
  // shorter and then earlier span wins.
  const auto tie = SoftMatch(Seq({"q", "c", "q", "q", "q", "b"}), Seq({"b", "c", "d"}));
  ASSERT_TRUE(tie);
  EXPECT_EQ(tie->start, 1u);
  EXPECT_EQ(tie->end, 1u);
}

TEST(SoftMatchTest, MatchesOraclesOnRandomInstances) {
  std::mt19937_64 rng(2024);
  size_t bounded = 0, brute = 0;
  for (int i = 0; i < 2000; ++i) {
    const TokenSeq p = RandomSeq(rng, 1 + rng() % 60, 20);
    const TokenSeq a = RandomSeq(rng, 1 + rng() % 6, 20);
    SoftMatchStats fast_stats, slow_stats;
    const auto fast = SoftMatch(p, a, &fast_stats, /*check_bound=*/true);
    const auto slow = SoftMatchBruteForce(p, a, &slow_stats);
    const auto ref = Reference(p, a);
    ASSERT_EQ(fast, slow) << i;
    ASSERT_EQ(fast.has_value(), ref.has_value());
    if (fast) {
      ASSERT_EQ(fast->start, ref->start);
      ASSERT_EQ(fast->end, ref->end);
      ASSERT_GT(fast->f1, 0.0);
    }
    ASSERT_EQ(fast_stats.bound_violations, 0u);
    ASSERT_LE(fast_stats.spans_examined, slow_stats.spans_examined);
    bounded += fast_stats.spans_examined;
    brute += slow_stats.spans_examined;
  }
  EXPECT_GE(static_cast<double>(brute) / bounded, 2.0);
}

TEST(AnnotateTest, ExactMatchesEverywhere) {
  const std::vector<AnnotationPassage> passages = {
      {10, TokenizeSimple("the answer is red fox here"), true},
      {11, TokenizeSimple("nothing"), false},
      {12, TokenizeSimple("red fox and red fox"), false},
  };
  const std::vector<std::string> answers = {"Red Fox"};
  const ExampleAnnotation a = AnnotateExample(answers, passages, TokenizeSimple);
  EXPECT_EQ(a.boundaries, (std::vector<Boundary>{{0, 3, 4}, {2, 0, 1}, {2, 3, 4}}));
  EXPECT_EQ(a.starts, (std::vector<TokenPos>{{0, 3}, {2, 0}, {2, 3}}));
  EXPECT_EQ(a.ends, (std::vector<TokenPos>{{0, 4}, {2, 1}, {2, 4}}));
  EXPECT_EQ(a.positive_passages, (std::vector<size_t>{0, 2}));
}

TEST(AnnotateTest, SoftMatchOnlyInGolden) {
  const std::vector<AnnotationPassage> passages = {
      {1, TokenizeSimple("only the fox appears"), false},
      {2, TokenizeSimple("a red wolf and a fox"), true},
  };
  const std::vector<std::string> answers = {"red fox"};
  const ExampleAnnotation a = AnnotateExample(answers, passages, TokenizeSimple);
  // One soft span in the golden passage; nothing in the other.
  ASSERT_EQ(a.boundaries.size(), 1u);
  EXPECT_EQ(a.boundaries[0].passage_index, 1u);
  EXPECT_EQ(a.boundaries[0].start, 1u);
  EXPECT_EQ(a.boundaries[0].end, 1u);

  const std::vector<AnnotationPassage> no_golden = {passages[0]};
  EXPECT_CODE(ErrorCode::kShouldHaveBeenFiltered,
              AnnotateExample(answers, no_golden, TokenizeSimple));
}

TEST(AnnotateTest, MultipleAnswersUnionDeduplicated) {
  const std::vector<AnnotationPassage> passages = {
      {1, TokenizeSimple("alpha beta gamma"), true},
  };
  const std::vector<std::string> answers = {"beta", "BETA", "beta gamma"};
  const ExampleAnnotation a = AnnotateExample(answers, passages, TokenizeSimple);
  EXPECT_EQ(a.boundaries, (std::vector<Boundary>{{0, 1, 1}, {0, 1, 2}}));
  EXPECT_EQ(a.starts, (std::vector<TokenPos>{{0, 1}}));
}

TEST(AnnotateTest, StoreOverloadAndFileRoundTrip) {
  const PassageStore store({{5, "t", "Zorro rides"}, {6, "t", "Batman flies"}});
  QAExample ex{"who?", {"batman"}, 6, "k"};
  const std::vector<PassageId> ids = {5, 6};
  const ExampleAnnotation a = AnnotateExample(ex, ids, store);
  EXPECT_EQ(a.positive_passages, (std::vector<size_t>{1}));

  testing::TempDir dir;
  SaveAnnotations(dir / "a.jsonl", std::vector<AnnotationRecord>{{"k", ids, a}});
  const auto back = LoadAnnotations(dir / "a.jsonl");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].question_key, "k");
  EXPECT_EQ(back[0].passage_ids, ids);
  EXPECT_EQ(back[0].annotation.boundaries, a.boundaries);
  EXPECT_EQ(back[0].annotation.starts, a.starts);

  std::ofstream(dir / "bad.jsonl")
      << R"({"question_key":"k","passage_ids":[5],"starts":[[3,0]],"ends":[],"boundaries":[],"positive_passages":[]})"
      << '\n';
  EXPECT_CODE(ErrorCode::kInvalidAnnotation, LoadAnnotations(dir / "bad.jsonl"));
}

}  // namespace
}  // namespace r2d2
