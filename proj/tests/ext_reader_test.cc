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

#include "r2d2/ext_reader.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <tuple>

#include <gtest/gtest.h>

#include "r2d2/jsonl.h"
#include "r2d2/passage_store.h"
#include "reader_oracle.h"
#include "test_util.h"

namespace r2d2 {
namespace {

using testing::Enumerate;
using testing::Instance;
using testing::kAllSubsets;
using testing::RandomInstance;


TEST(ComputeScoresTest, HandCase) {
  EncoderOutput enc;
  enc.passage_id = 4;
  enc.hidden_dim = 2;
  enc.hidden = {1, 0, 0, 1, 1, 1};
  enc.kinds = {TokenKind::kCls, TokenKind::kContext, TokenKind::kContext};
  enc.token_to_char = {std::nullopt, CharSpan{0, 1}, CharSpan{2, 3}};
  ReaderHeads heads = ReaderHeads::Zeros(2);
  const ScoreSet zero = ComputeScores(enc, heads, 3);
  for (double v : zero.start) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(zero.passage, 0.0);
  heads.w_start = {2, 3};
  heads.w_end = {1, -1};
  heads.w_joint = {1, 0, 0, 1};
  heads.w_passage = {5, 7};
  const ScoreSet s = ComputeScores(enc, heads, 3);
  EXPECT_EQ(s.start, (std::vector<double>{2, 3, 5}));
  EXPECT_EQ(s.end, (std::vector<double>{1, -1, 0}));
  EXPECT_EQ(s.passage, 5.0);
  // Identity bilinear form: plain dot products.
  EXPECT_EQ(s.Joint(0, 1), 0.0);
  EXPECT_EQ(s.Joint(0, 2), 1.0);
  EXPECT_EQ(s.Joint(1, 2), 1.0);
  EXPECT_EQ(s.Joint(2, 2), 2.0);
  heads.b_joint = {1, 1};
  EXPECT_EQ(ComputeScores(enc, heads, 3).Joint(0, 1), 1.0);  // (h0 + b) . h1
  EXPECT_CODE(ErrorCode::kDimensionMismatch, ComputeScores(enc, ReaderHeads::Zeros(3), 3));
  enc.kinds[1] = TokenKind::kCls;
  EXPECT_CODE(ErrorCode::kInvalidArgument, ComputeScores(enc, heads, 3));
}

TEST(NormalizeTest, SingleTokenAndSymmetry) {
  ScoreSet s;
  s.passage_id = 1;
  s.band = 4;
  s.start = {9, 3};
  s.end = {9, -2};
  s.joint.assign(8, 0.5);
  s.passage = 0.3;
  const std::vector<std::vector<uint8_t>> mask = {{0, 1}};
  const Distributions d = Normalize(std::span(&s, 1), mask);
  EXPECT_EQ(d.log_start[0][1], 0.0);
  EXPECT_EQ(d.log_end[0][1], 0.0);
  EXPECT_EQ(d.LogJoint(0, 1, 1), 0.0);
  EXPECT_EQ(d.log_passage[0], 0.0);
  EXPECT_EQ(d.log_start[0][0], -INFINITY);

  std::vector<ScoreSet> two = {s, s};
  two[1].passage_id = 2;
  const std::vector<std::vector<uint8_t>> masks = {{0, 1}, {0, 1}};
  const Distributions d2 = Normalize(two, masks);
  EXPECT_NEAR(std::exp(d2.log_passage[0]), 0.5, 1e-15);
  EXPECT_NEAR(std::exp(d2.log_passage[1]), 0.5, 1e-15);

  const std::vector<std::vector<uint8_t>> empty = {{0, 0}};
  EXPECT_CODE(ErrorCode::kInvalidArgument, Normalize(std::span(&s, 1), empty));
}

TEST(NormalizeTest, AllDistributionsSumToOne) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 100; ++t) {
    const Instance in = RandomInstance(rng, 3, 15, 4, 10.0);
    const Distributions d = Normalize(in.sets, in.masks);
    double ss = 0, se = 0, sj = 0, sp = 0;
    for (size_t p = 0; p < d.passages(); ++p) {
      for (size_t i = 0; i < d.tokens(p); ++i) {
        ss += std::exp(d.log_start[p][i]);
        se += std::exp(d.log_end[p][i]);
        for (size_t e = i; e < d.tokens(p) && e - i < d.band; ++e) {
          if (d.InJointSupport(p, i, e)) sj += std::exp(d.LogJoint(p, i, e));
        }
      }
      sp += std::exp(d.log_passage[p]);
    }
    EXPECT_NEAR(ss, 1.0, 1e-9);
    EXPECT_NEAR(se, 1.0, 1e-9);
    EXPECT_NEAR(sj, 1.0, 1e-9);
    EXPECT_NEAR(sp, 1.0, 1e-9);
  }
}

TEST(DecodeTest, MatchesExhaustiveEnumeration) {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 200; ++t) {
    const size_t band = 2 + rng() % 5;
    const Instance in = RandomInstance(rng, 1 + rng() % 3, 12, band);
    const Distributions d = Normalize(in.sets, in.masks);
    const Factorization& f = kAllSubsets[t % kAllSubsets.size()];
    const size_t max_len = 1 + rng() % band;
    const auto ref = Enumerate(in, f, max_len);
    const size_t m = 1 + rng() % (ref.size() + 2);
    const auto got = DecodeSpans(d, f, m, max_len);
    ASSERT_EQ(got.size(), std::min(m, ref.size()));
    for (size_t i = 0; i < got.size(); ++i) {
      ASSERT_EQ(got[i].passage_index, ref[i].p) << t << " " << i;
      ASSERT_EQ(got[i].start_tok, ref[i].s) << t << " " << i;
      ASSERT_EQ(got[i].end_tok, ref[i].e) << t << " " << i;
      ASSERT_NEAR(got[i].logp_e, ref[i].score, 1e-9);
    }
  }
}

TEST(DecodeTest, EveryLegalSpanOnceAndNormalizedMode) {
  std::mt19937_64 rng(2);
  const Instance in = RandomInstance(rng, 2, 10, 3);
  const Distributions d = Normalize(in.sets, in.masks);
  const auto ref = Enumerate(in, Factorization::All(), 3);
  const auto all = DecodeSpans(d, Factorization::All(), 10000, 3);
  EXPECT_EQ(all.size(), ref.size());
  std::set<std::tuple<size_t, size_t, size_t>> seen;
  for (const auto& s : all) {
    EXPECT_TRUE(seen.insert({s.passage_index, s.start_tok, s.end_tok}).second);
    EXPECT_TRUE(d.masks[s.passage_index][s.start_tok]);
    EXPECT_TRUE(d.masks[s.passage_index][s.end_tok]);
  }
  const auto norm = DecodeSpans(d, Factorization::All(), 10000, 3, SpanScoreMode::kNormalizedProduct);
  double total = 0;
  for (size_t i = 0; i < norm.size(); ++i) {
    total += std::exp(norm[i].logp_e);
    EXPECT_EQ(norm[i].start_tok, all[i].start_tok);
  }
  EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST(DecodeTest, SeparableArgmaxAndShiftInvariance) {
  ScoreSet s;
  s.passage_id = 1;
  s.band = 5;
  s.start = {0, 0, 9, 0, 0, 0};
  s.end = {0, 0, 0, 0, 9, 0};
  s.joint.assign(30, 0.0);
  s.passage = 0;
  const std::vector<std::vector<uint8_t>> mask = {{0, 1, 1, 1, 1, 1}};
  const auto top = DecodeSpans(Normalize(std::span(&s, 1), mask), Factorization::Parse("I"), 1, 5);
  EXPECT_EQ(top[0].start_tok, 2u);
  EXPECT_EQ(top[0].end_tok, 4u);

  std::mt19937_64 rng(5);
  for (int t = 0; t < 100; ++t) {
    Instance in = RandomInstance(rng, 3, 12, 4);
    const auto before = DecodeSpans(Normalize(in.sets, in.masks), Factorization::All(), 8, 4);
    const double c = static_cast<double>(rng() % 50) - 25;
    const int which = t % 4;
    for (auto& set : in.sets) {
      if (which == 0) for (double& v : set.start) v += c;
      if (which == 1) for (double& v : set.end) v += c;
      if (which == 2) for (double& v : set.joint) v += c;
      if (which == 3) set.passage += c;
    }
    const auto after = DecodeSpans(Normalize(in.sets, in.masks), Factorization::All(), 8, 4);
    for (size_t i = 0; i < before.size(); ++i) {
      ASSERT_EQ(before[i].passage_index, after[i].passage_index);
      ASSERT_EQ(before[i].start_tok, after[i].start_tok);
      ASSERT_EQ(before[i].end_tok, after[i].end_tok);
    }
  }
}

TEST(DecodeTest, OnlySpanWhenOneContextToken) {
  ScoreSet s;
  s.passage_id = 3;
  s.band = 2;
  s.start = {1, 2};
  s.end = {3, 4};
  s.joint.assign(4, 1.0);
  const std::vector<std::vector<uint8_t>> mask = {{0, 1}};
  const Distributions d = Normalize(std::span(&s, 1), mask);
  for (const auto& f : kAllSubsets) {
    const auto spans = DecodeSpans(d, f, 5, 2);
    ASSERT_EQ(spans.size(), 1u);
    EXPECT_EQ(spans[0].start_tok, 1u);
    EXPECT_EQ(spans[0].logp_e, 0.0);
  }
  EXPECT_CODE(ErrorCode::kInvalidArgument, Factorization::Parse(""));
  EXPECT_CODE(ErrorCode::kInvalidArgument, DecodeSpans(d, Factorization::All(), 0, 2));
}

TEST(ReaderLossTest, ClosedFormTerms) {
  // Four passages, equal passage scores, one positive: ln 4.
  std::vector<ScoreSet> sets;
  std::vector<std::vector<uint8_t>> masks;
  for (PassageId p = 0; p < 4; ++p) {
    ScoreSet s;
    s.passage_id = p;
    s.band = 2;
    s.start = {0, p == 0 ? 100.0 : -100.0};
    s.end = {0, p == 0 ? 100.0 : -100.0};
    s.joint = {0, 0, p == 0 ? 100.0 : -100.0, 0};
    s.passage = 1.0;
    sets.push_back(s);
    masks.push_back({0, 1});
  }
  const Distributions d = Normalize(sets, masks);
  ReaderTargets targets;
  targets.starts = {{0, 1}};
  targets.ends = {{0, 1}};
  targets.boundaries = {{0, 1, 1}};
  targets.positive_passages = {0};
  const ReaderLoss loss = ComputeReaderLoss(d, targets);
  EXPECT_LT(loss.start_term, 1e-80);
  EXPECT_NEAR(loss.passage_term, std::log(4.0), 1e-12);
  EXPECT_GE(loss.loss, 0.0);

  targets.starts = {{0, 0}};  // a question token
  EXPECT_CODE(ErrorCode::kInvalidAnnotation, ComputeReaderLoss(d, targets));
  targets.starts = {};
  EXPECT_CODE(ErrorCode::kInvalidAnnotation, ComputeReaderLoss(d, targets));
}

TEST(ReaderLossTest, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    Instance in = RandomInstance(rng, 1 + rng() % 3, 8, 3, 1.0);
    // Targets: random legal positions.
    const Distributions d0 = Normalize(in.sets, in.masks);
    const auto spans = DecodeSpans(d0, Factorization::All(), 1000, 3);
    ReaderTargets targets;
    for (size_t k = 0; k < 1 + rng() % 3; ++k) {
      const AnswerSpan& s = spans[rng() % spans.size()];
      targets.starts.push_back({s.passage_index, s.start_tok});
      targets.ends.push_back({s.passage_index, s.end_tok});
      targets.boundaries.push_back({s.passage_index, s.start_tok, s.end_tok});
      targets.positive_passages.push_back(s.passage_index);
    }
    const ReaderLoss analytic = ComputeReaderLoss(d0, targets);
    EXPECT_GE(analytic.loss, 0.0);

    std::vector<double*> params;
    std::vector<double> grads;
    for (size_t p = 0; p < in.sets.size(); ++p) {
      ScoreSet& s = in.sets[p];
      for (size_t i = 0; i < s.tokens(); ++i) {
        params.push_back(&s.start[i]);
        grads.push_back(analytic.grads.start[p][i]);
        params.push_back(&s.end[i]);
        grads.push_back(analytic.grads.end[p][i]);
      }
      for (size_t j = 0; j < s.joint.size(); ++j) {
        params.push_back(&s.joint[j]);
        grads.push_back(analytic.grads.joint[p][j]);
      }
      params.push_back(&s.passage);
      grads.push_back(analytic.grads.passage[p]);
    }
    std::vector<double> x;
    for (double* p : params) x.push_back(*p);
    auto f = [&](std::span<const double> v) {
      for (size_t i = 0; i < v.size(); ++i) *params[i] = v[i];
      const double l = ComputeReaderLoss(Normalize(in.sets, in.masks), targets).loss;
      return l;
    };
    const auto numeric = testing::NumericGradient(f, x);
    f(x);
    for (size_t i = 0; i < x.size(); ++i) {
      ASSERT_TRUE(testing::RelClose(grads[i], numeric[i], 1e-5)) << trial << " " << i << " "
                                                                << grads[i] << " " << numeric[i];
    }
    // Each term's gradient sums to zero over its own tensor.
    auto sum = [](const std::vector<std::vector<double>>& g) {
      double t = 0;
      for (const auto& row : g) for (double v : row) t += v;
      return t;
    };
    EXPECT_NEAR(sum(analytic.grads.start), 0.0, 1e-12);
    EXPECT_NEAR(sum(analytic.grads.end), 0.0, 1e-12);
    EXPECT_NEAR(sum(analytic.grads.joint), 0.0, 1e-12);
  }
}

TEST(PassageRerankTest, Order) {
  std::vector<ScoreSet> sets(2);
  sets[0].passage_id = 5;
  sets[1].passage_id = 2;
  EXPECT_EQ(PassageRerankByReader(sets), (std::vector<PassageId>{2, 5}));
  sets[0].passage = 0.9;
  sets[1].passage = 0.1;
  EXPECT_EQ(PassageRerankByReader(sets), (std::vector<PassageId>{5, 2}));
}

TEST(ReaderFilesTest, EncoderAndHeadsRoundTrip) {
  testing::TempDir dir;
  EncoderOutput enc;
  enc.passage_id = 9;
  enc.hidden_dim = 3;
  enc.kinds = {TokenKind::kCls, TokenKind::kQuestion, TokenKind::kSep, TokenKind::kContext};
  enc.token_to_char = {std::nullopt, std::nullopt, std::nullopt, CharSpan{0, 5}};
  enc.hidden = {0.5f, -1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 1e-7f};
  WriteEncoderOutput(enc, dir / "e.enc");
  const EncoderOutput back = ReadEncoderOutput(dir / "e.enc", 9);
  EXPECT_EQ(back.hidden, enc.hidden);
  EXPECT_EQ(back.kinds, enc.kinds);
  EXPECT_EQ(back.token_to_char, enc.token_to_char);
  EXPECT_EQ(back.passage_id, 9u);

  ReaderHeads heads = ReaderHeads::Zeros(3);
  heads.w_start = {0.1, 0.2, 0.3};
  heads.w_joint[4] = -2.5;
  heads.w_passage = {1, 2, 3};
  WriteReaderHeads(heads, dir / "h.json");
  const ReaderHeads hb = ReadReaderHeads(dir / "h.json");
  EXPECT_EQ(hb.w_start, (std::vector<double>{0.1f, 0.2f, 0.3f}));
  EXPECT_EQ(hb.w_joint[4], -2.5);
  EXPECT_EQ(hb.w_passage, heads.w_passage);

  std::string bytes = ReadFileBytes(dir / "e.enc");
  std::ofstream(dir / "cut.enc", std::ios::binary) << bytes.substr(0, bytes.size() - 2);
  EXPECT_CODE(ErrorCode::kTruncated, ReadEncoderOutput(dir / "cut.enc", 9));
  bytes[0] = 'X';
  std::ofstream(dir / "magic.enc", std::ios::binary) << bytes;
  EXPECT_CODE(ErrorCode::kFormat, ReadEncoderOutput(dir / "magic.enc", 9));
}

TEST(EncoderTargetsTest, ShiftByFirstContextToken) {
  EncoderOutput enc;
  enc.passage_id = 1;
  enc.hidden_dim = 1;
  enc.hidden = {0, 0, 0, 0, 0};
  enc.kinds = {TokenKind::kCls, TokenKind::kQuestion, TokenKind::kSep, TokenKind::kContext,
               TokenKind::kContext};
  ExampleAnnotation a;
  a.starts = {{0, 0}};
  a.ends = {{0, 1}};
  a.boundaries = {{0, 0, 1}};
  a.positive_passages = {0};
  const ReaderTargets t = ToEncoderTargets(a, std::span(&enc, 1));
  EXPECT_EQ(t.starts, (std::vector<TokenPos>{{0, 3}}));
  EXPECT_EQ(t.ends, (std::vector<TokenPos>{{0, 4}}));
  EXPECT_EQ(t.boundaries, (std::vector<Boundary>{{0, 3, 4}}));
  a.ends = {{0, 2}};
  EXPECT_CODE(ErrorCode::kInvalidAnnotation, ToEncoderTargets(a, std::span(&enc, 1)));
}

TEST(AttachTextTest, SlicesContext) {
  const PassageStore store({{9, "t", "Hello wörld"}});
  EncoderOutput enc;
  enc.passage_id = 9;
  enc.hidden_dim = 1;
  enc.hidden = {0, 0, 0};
  enc.kinds = {TokenKind::kCls, TokenKind::kContext, TokenKind::kContext};
  enc.token_to_char = {std::nullopt, CharSpan{0, 5}, CharSpan{6, 12}};
  std::vector<AnswerSpan> spans(1);
  spans[0].passage_id = 9;
  spans[0].start_tok = 1;
  spans[0].end_tok = 2;
  AttachSpanText(spans, std::span(&enc, 1), store);
  EXPECT_EQ(spans[0].text, "Hello wörld");
}

}  // namespace
}  // namespace r2d2
