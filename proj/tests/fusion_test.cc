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

#include "r2d2/fusion.h"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "r2d2/trainer.h"
#include "test_util.h"

namespace r2d2 {
namespace {

AnswerSpan Span(const std::string& text, double logp_e) {
  AnswerSpan s;
  s.text = text;
  s.logp_e = logp_e;
  return s;
}

std::vector<AggregationExample> RandomAggregationData(std::mt19937_64& rng, size_t n) {
  std::uniform_real_distribution<double> u(0.01, 0.99);
  std::vector<AggregationExample> out(n);
  for (auto& ex : out) {
    const size_t m = 2 + rng() % 4;
    for (size_t i = 0; i < m; ++i) ex.candidates.push_back({u(rng), u(rng), u(rng), u(rng)});
    ex.gt = rng() % m;
  }
  return out;
}

TEST(AnswerRerankTest, SortsByGenerativeScoreStably) {
  const std::vector<AnswerSpan> spans = {Span("a", -1), Span("b", -2), Span("c", -3)};
  const auto out = AnswerRerank(spans, {{"a", -5.0}, {"b", -0.5}, {"c", -5.0}});
  EXPECT_EQ(out[0].text, "b");
  EXPECT_EQ(out[1].text, "a");
  EXPECT_EQ(out[2].text, "c");
  EXPECT_EQ(*out[0].logp_g, -0.5);
  EXPECT_CODE(ErrorCode::kMissingScore, AnswerRerank(spans, {{"a", -1.0}}));
}

TEST(FeatureMaskTest, Parse) {
  EXPECT_EQ(FeatureMask::Parse("e,g,r,rr"), FeatureMask::All());
  const FeatureMask m = FeatureMask::Parse("e,rr");
  EXPECT_EQ(m.count(), 2u);
  EXPECT_TRUE(m.has(Feature::kReranker));
  EXPECT_FALSE(m.has(Feature::kGenerative));
  EXPECT_EQ(FeatureMask::Parse(m.ToString()), m);
  EXPECT_CODE(ErrorCode::kInvalidArgument, FeatureMask::Parse("e,x"));
  EXPECT_CODE(ErrorCode::kInvalidArgument, FeatureMask::Parse(""));
}

TEST(AggregateScoreTest, Values) {
  AggregationModel unit{FeatureMask::All(), {1, 1, 1, 1}, 0.0, {}, 0.0};
  EXPECT_NEAR(AggregateScore({0.5, 0.5, 0.5, 1.0}, unit), std::log(0.125), 1e-15);
  EXPECT_NEAR(AggregateScore({0.5, 0.5, 0.5, 1.0}, unit), -2.0794, 1e-4);
  AggregationModel e_only{FeatureMask::Parse("e"), {2.0}, 0.5, {}, 0.0};
  // Inactive features may be anything, even zero.
  EXPECT_NEAR(AggregateScore({0.25, 0.0, -1.0, 0.0}, e_only), 2 * std::log(0.25) + 0.5, 1e-15);
  EXPECT_CODE(ErrorCode::kInvalidArgument, AggregateScore({0.0, 0.5, 0.5, 0.5}, unit));
  const AggregationModel bad{FeatureMask::Parse("e"), {1, 1}, 0, {}, 0};
  EXPECT_CODE(ErrorCode::kDimensionMismatch, AggregateScore({0.5, 0.5, 0.5, 0.5}, bad));
}

TEST(AggregationLossTest, UniformCandidatesGiveLogCount) {
  std::vector<AggregationExample> data(1);
  data[0].candidates.assign(5, {0.3, 0.3, 0.3, 0.3});
  const double params[] = {0.7, -0.2, 1.5, 0.1, 3.0};
  const auto lg = AggregationLoss(data, FeatureMask::All(), params);
  EXPECT_NEAR(lg.loss, std::log(5.0), 1e-12);
  for (double g : lg.grad) EXPECT_NEAR(g, 0.0, 1e-12);
  data[0].gt = 5;
  EXPECT_CODE(ErrorCode::kInvalidArgument, AggregationLoss(data, FeatureMask::All(), params));
}

TEST(AggregationLossTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> g(0, 1);
  const std::vector<std::string> masks = {"e,g,r,rr", "e,g", "e", "g,rr", "e,g,rr"};
  for (int t = 0; t < 25; ++t) {
    const auto data = RandomAggregationData(rng, 1 + rng() % 6);
    const FeatureMask mask = FeatureMask::Parse(masks[t % masks.size()]);
    std::vector<double> params(mask.count() + 1);
    for (double& p : params) p = g(rng);
    const auto lg = AggregationLoss(data, mask, params);
    const auto numeric = testing::NumericGradient(
        [&](std::span<const double> x) { return AggregationLoss(data, mask, x).loss; }, params);
    for (size_t i = 0; i < params.size(); ++i) {
      ASSERT_TRUE(testing::RelClose(lg.grad[i], numeric[i], 1e-5)) << lg.grad[i] << " " << numeric[i];
    }
    // The bias shifts every candidate equally.
    EXPECT_NEAR(lg.grad.back(), 0.0, 1e-12);
  }
}

TEST(TrainAggregationTest, LearnsSeparableSignal) {
  // The ground truth always has the best generative feature and a random
  // extractive one: the generative weight must come out positive.
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.05, 0.5);
  std::vector<AggregationExample> data(60);
  for (auto& ex : data) {
    for (int i = 0; i < 4; ++i) ex.candidates.push_back({u(rng), u(rng), 0.5, 0.5});
    ex.gt = rng() % 4;
    ex.candidates[ex.gt][1] = 0.9;
  }
  TrainOptions opts;
  opts.epochs = 300;
  opts.lr = 0.5;
  const AggregationModel m = TrainAggregation(data, FeatureMask::Parse("e,g"), opts);
  EXPECT_GT(m.w[1], 1.0);
  EXPECT_GT(m.w[1], std::fabs(m.w[0]));
  size_t right = 0;
  for (const auto& ex : data) right += BestAggregated(ex.candidates, m).index == ex.gt;
  EXPECT_EQ(right, data.size());
  EXPECT_LT(m.final_loss, std::log(4.0));

  opts.epochs = 0;
  const AggregationModel zero = TrainAggregation(data, FeatureMask::Parse("e,g"), opts);
  EXPECT_EQ(zero.w, (std::vector<double>{0, 0}));
  EXPECT_NEAR(zero.final_loss, std::log(4.0), 1e-12);

  opts.epochs = 50;
  const auto a = TrainAggregation(data, FeatureMask::All(), opts);
  const auto b = TrainAggregation(data, FeatureMask::All(), opts);
  EXPECT_EQ(a.w, b.w);
  EXPECT_EQ(a.b, b.b);
}

TEST(BestAggregatedTest, TiesKeepEarlierRank) {
  const AggregationModel m{FeatureMask::Parse("g"), {1.0}, 0.0, {}, 0.0};
  const std::vector<FusionFeatures> c = {{0.9, 0.2, 1, 1}, {0.5, 0.4, 1, 1}, {0.1, 0.4, 1, 1}};
  const BestSpan best = BestAggregated(c, m);
  EXPECT_EQ(best.index, 1u);
  EXPECT_NEAR(best.score, std::log(0.4), 1e-15);
  EXPECT_CODE(ErrorCode::kInvalidArgument, BestAggregated(std::vector<FusionFeatures>{}, m));
}

TEST(BceTest, Values) {
  EXPECT_NEAR(Bce(0.0, 1).loss, std::log(2.0), 1e-15);
  EXPECT_NEAR(Bce(0.0, 0).loss, std::log(2.0), 1e-15);
  EXPECT_EQ(Bce(0.0, 1).grad, -0.5);
  EXPECT_EQ(Bce(0.0, 0).grad, 0.5);
  EXPECT_NEAR(Bce(20.0, 1).loss, 2.061153622e-9, 1e-17);
  EXPECT_NEAR(Bce(-20.0, 0).loss, 2.061153622e-9, 1e-17);
  EXPECT_NEAR(Bce(1000.0, 0).loss, 1000.0, 1e-9);  // no overflow
  EXPECT_TRUE(std::isfinite(Bce(-1000.0, 1).loss));
  EXPECT_CODE(ErrorCode::kInvalidArgument, Bce(0.0, 2));
  EXPECT_CODE(ErrorCode::kInvalidArgument, Bce(NAN, 1));
  EXPECT_EQ(Sigmoid(0.0), 0.5);
  EXPECT_NEAR(Sigmoid(-800.0), 0.0, 1e-300);
}

TEST(BceTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g(0, 3);
  for (int t = 0; t < 40; ++t) {
    const double l = g(rng);
    const int target = static_cast<int>(rng() % 2);
    const double numeric = (Bce(l + 1e-6, target).loss - Bce(l - 1e-6, target).loss) / 2e-6;
    EXPECT_TRUE(testing::RelClose(Bce(l, target).grad, numeric, 1e-5));
  }
}

TEST(DecisionLossTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(15);
  std::normal_distribution<double> g(0, 1);
  for (int t = 0; t < 20; ++t) {
    std::vector<DecisionExample> data(1 + rng() % 10);
    for (auto& ex : data) ex = {g(rng) * 3, g(rng) * 3, static_cast<int>(rng() % 2)};
    const std::vector<double> params = {g(rng), g(rng), g(rng)};
    const auto lg = DecisionLoss(data, params);
    const auto numeric = testing::NumericGradient(
        [&](std::span<const double> x) { return DecisionLoss(data, x).loss; }, params);
    for (size_t i = 0; i < 3; ++i) {
      ASSERT_TRUE(testing::RelClose(lg.grad[i], numeric[i], 1e-5)) << lg.grad[i] << " " << numeric[i];
    }
  }
}

TEST(DecisionTest, ThresholdAndSelection) {
  DecisionModel m;
  m.w = {-1.0, 1.0};
  m.b = 0.0;
  EXPECT_EQ(DecisionLogit(-2.0, -1.0, m), 1.0);
  EXPECT_TRUE(ChooseAbstractive(-2.0, -1.0, m));
  EXPECT_TRUE(ChooseAbstractive(-1.0, -1.0, m));  // sigmoid exactly 0.5
  EXPECT_FALSE(ChooseAbstractive(-1.0, -2.0, m));
  EXPECT_EQ(Decide("span", "gen", -2.0, -1.0, m), "gen");
  EXPECT_EQ(Decide("span", "gen", -1.0, -2.0, m), "span");
}

TEST(TrainBinaryDecisionTest, LearnsAndHandlesDegenerateTargets) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0, 1);
  std::vector<DecisionExample> data(200);
  for (auto& ex : data) {
    ex.s_agg = g(rng);
    ex.s_g_star = g(rng);
    ex.target = ex.s_g_star > ex.s_agg ? 1 : 0;
  }
  TrainOptions opts;
  opts.epochs = 500;
  opts.lr = 1.0;
  const DecisionModel m = TrainBinaryDecision(data, opts);
  size_t right = 0;
  for (const auto& ex : data) right += ChooseAbstractive(ex.s_agg, ex.s_g_star, m) == (ex.target == 1);
  EXPECT_GE(right, 190u);
  EXPECT_LT(m.w[0], 0.0);
  EXPECT_GT(m.w[1], 0.0);

  for (auto& ex : data) ex.target = 1;
  const DecisionModel ones = TrainBinaryDecision(data, opts);
  for (const auto& ex : data) EXPECT_TRUE(ChooseAbstractive(ex.s_agg, ex.s_g_star, ones));
  EXPECT_LT(ones.final_loss, 0.1);

  EXPECT_CODE(ErrorCode::kInvalidArgument, TrainBinaryDecision({}, opts));
}

TEST(TrainerTest, DivergenceIsReported) {
  TrainOptions opts;
  opts.epochs = 5;
  opts.halve_on_increase = false;
  // f(x) = x^4 with a large step blows up.
  const Objective quartic = [](std::span<const double> x, std::span<double> grad) {
    grad[0] = 4 * x[0] * x[0] * x[0];
    return x[0] * x[0] * x[0] * x[0];
  };
  opts.lr = 1e6;
  EXPECT_CODE(ErrorCode::kDivergence, MinimizeGradientDescent(quartic, {3.0}, opts));
  opts.lr = 0.01;
  opts.epochs = 200;
  const auto ok = MinimizeGradientDescent(quartic, {1.0}, opts);
  EXPECT_LT(std::fabs(ok.params[0]), 1.0);
  EXPECT_EQ(MinimizeGradientDescent(quartic, {1.0}, opts).params, ok.params);
}

TEST(FusionFilesTest, RoundTrip) {
  testing::TempDir dir;
  AggregationModel a{FeatureMask::Parse("e,g,rr"), {0.1, -2.5, 1e-3}, 0.7, {}, 0.25};
  a.options.seed = 9;
  a.options.epochs = 12;
  SaveAggregationModel(a, dir / "a.json");
  const auto ab = LoadAggregationModel(dir / "a.json");
  EXPECT_EQ(ab.mask, a.mask);
  EXPECT_EQ(ab.w, a.w);
  EXPECT_EQ(ab.b, a.b);
  EXPECT_EQ(ab.options.epochs, 12);

  DecisionModel d;
  d.w = {-1.25, 3.0};
  d.b = 0.125;
  SaveDecisionModel(d, dir / "d.json");
  const auto db = LoadDecisionModel(dir / "d.json");
  EXPECT_EQ(db.w, d.w);
  EXPECT_EQ(db.b, d.b);
  EXPECT_CODE(ErrorCode::kFormat, LoadAggregationModel(dir / "d.json"));
  EXPECT_CODE(ErrorCode::kFormat, LoadDecisionModel(dir / "a.json"));
}

}  // namespace
}  // namespace r2d2
