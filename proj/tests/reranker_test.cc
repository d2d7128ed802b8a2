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

#include "r2d2/reranker.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "r2d2/corpus.h"
#include "test_util.h"

namespace r2d2 {
namespace {

CandidateList List(const std::vector<std::pair<PassageId, double>>& rows) {
  CandidateList out{"q", {}};
  for (const auto& [id, s] : rows) out.entries.push_back({id, s});
  return out;
}

TEST(SoftmaxOverSetTest, HandValues) {
  const auto half = SoftmaxOverSet(std::map<std::string, double>{{"a", 0}, {"b", 0}});
  EXPECT_DOUBLE_EQ(half.at("a"), 0.5);
  const auto twothirds =
      SoftmaxOverSet(std::map<std::string, double>{{"a", std::log(2.0)}, {"b", 0}});
  EXPECT_NEAR(twothirds.at("a"), 2.0 / 3, 1e-15);
  EXPECT_NEAR(twothirds.at("b"), 1.0 / 3, 1e-15);
  EXPECT_EQ(SoftmaxOverSet(std::map<int, double>{{1, -1234.5}}).at(1), 1.0);
  EXPECT_CODE(ErrorCode::kInvalidArgument, SoftmaxOverSet(std::map<int, double>{}));
  EXPECT_CODE(ErrorCode::kInvalidArgument, SoftmaxOverSet(std::map<int, double>{{1, INFINITY}}));
}

TEST(SoftmaxOverSetTest, SumsToOneAndShiftInvariant) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int t = 0; t < 100; ++t) {
    std::map<int, double> s;
    const int n = 1 + static_cast<int>(rng() % 30);
    for (int i = 0; i < n; ++i) s[i] = u(rng);
    const auto p = SoftmaxOverSet(s);
    double total = 0;
    for (const auto& [k, v] : p) total += v;
    EXPECT_NEAR(total, 1.0, 1e-9);
    std::map<int, double> shifted = s;
    const double c = u(rng) * 10;
    for (auto& [k, v] : shifted) v += c;
    const auto q = SoftmaxOverSet(shifted);
    for (const auto& [k, v] : p) EXPECT_NEAR(q.at(k), v, 1e-12);
  }
}

TEST(RerankDistributionTest, Values) {
  const CandidateList four = List({{1, 0}, {2, 0}, {3, 0}, {4, 0}});
  for (const auto& [id, p] : RerankDistribution(four, {{1, 3}, {2, 3}, {3, 3}, {4, 3}})) {
    EXPECT_DOUBLE_EQ(p, 0.25);
  }
  const auto three = RerankDistribution(List({{0, 0}, {1, 0}, {2, 0}}), {{0, 0}, {1, 1}, {2, 2}});
  EXPECT_NEAR(three.at(0), 0.0900, 1e-4);
  EXPECT_NEAR(three.at(1), 0.2447, 1e-4);
  EXPECT_NEAR(three.at(2), 0.6652, 1e-4);
  // Scores outside the candidate set do not take mass.
  const auto restricted = RerankDistribution(List({{0, 0}, {1, 0}}), {{0, 0}, {1, 0}, {9, 100}});
  EXPECT_DOUBLE_EQ(restricted.at(0), 0.5);
  EXPECT_CODE(ErrorCode::kMissingScore, RerankDistribution(List({{0, 0}, {5, 0}}), {{0, 0}}));
}

TEST(ApplyRerankTest, OrderAndTies) {
  const CandidateList c = List({{10, 3.0}, {11, 2.0}, {12, 1.0}});
  EXPECT_EQ(ApplyRerank(c, {{10, 3}, {11, 2}, {12, 1}}, 3).ids(), (std::vector<PassageId>{10, 11, 12}));
  EXPECT_EQ(ApplyRerank(c, {{10, 1}, {11, 2}, {12, 3}}, 3).ids(), (std::vector<PassageId>{12, 11, 10}));
  EXPECT_EQ(ApplyRerank(c, {{10, 1}, {11, 2}, {12, 3}}, 1).ids(), (std::vector<PassageId>{12}));
  // Equal rerank scores fall back to retriever score, then id.
  const CandidateList t = List({{7, 1.0}, {3, 1.0}, {5, 2.0}});
  EXPECT_EQ(ApplyRerank(t, {{7, 0}, {3, 0}, {5, 0}}, 3).ids(), (std::vector<PassageId>{5, 3, 7}));
  EXPECT_CODE(ErrorCode::kInvalidArgument, ApplyRerank(c, {{10, 1}, {11, 2}, {12, 3}}, 4));
}

TEST(ApplyRerankTest, PermutationInvariant) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 50; ++t) {
    CandidateList c{"q", {}};
    RerankScores s;
    for (PassageId i = 0; i < 20; ++i) {
      c.entries.push_back({i, static_cast<double>(rng() % 3)});
      s[i] = static_cast<double>(rng() % 4);
    }
    const auto base = ApplyRerank(c, s, 12).ids();
    std::shuffle(c.entries.begin(), c.entries.end(), rng);
    EXPECT_EQ(ApplyRerank(c, s, 12).ids(), base);
  }
}

PassageStore BatchStore() {
  std::vector<Passage> p;
  for (PassageId i = 0; i < 200; ++i) {
    const bool has = i == 3 || i == 7 || i == 150;
    p.push_back({i, "t" + std::to_string(i), has ? "the answer is zorro" : "nothing here " + std::to_string(i)});
  }
  return PassageStore(p);
}

TEST(TrainingBatchTest, PositiveSelection) {
  const PassageStore store = BatchStore();
  std::vector<PassageId> retrieved;
  for (PassageId i = 0; i < 200; ++i) retrieved.push_back(i);
  QAExample ex{"who?", {"zorro"}, std::nullopt, ""};
  EXPECT_EQ(BuildTrainingBatch(ex, retrieved, store, 5, 1).positive_id, 3u);
  ex.golden_passage_id = 42;
  EXPECT_EQ(BuildTrainingBatch(ex, retrieved, store, 5, 1).positive_id, 42u);
  QAExample none{"who?", {"batman"}, std::nullopt, ""};
  EXPECT_CODE(ErrorCode::kShouldHaveBeenFiltered, BuildTrainingBatch(none, retrieved, store, 5, 1));
}

TEST(TrainingBatchTest, NegativesAreDistinctAndAnswerFree) {
  const PassageStore store = BatchStore();
  std::vector<PassageId> retrieved;
  for (PassageId i = 0; i < 200; ++i) retrieved.push_back(i);
  const QAExample ex{"who?", {"zorro"}, std::nullopt, ""};
  const RerankerBatch b = BuildTrainingBatch(ex, retrieved, store, 23, 9);
  ASSERT_EQ(b.negative_ids.size(), 23u);
  EXPECT_EQ(std::set<PassageId>(b.negative_ids.begin(), b.negative_ids.end()).size(), 23u);
  const std::vector<std::string> answers = {"zorro"};
  for (PassageId id : b.negative_ids) EXPECT_FALSE(ContainsAnswer(store.at(id), answers));
  EXPECT_EQ(BuildTrainingBatch(ex, retrieved, store, 23, 9).negative_ids, b.negative_ids);
}

TEST(RerankerLossTest, ValuesAndGradient) {
  const std::vector<double> flat(24, 1.5);
  EXPECT_NEAR(RerankerLoss(flat, 3).loss, std::log(24.0), 1e-12);
  std::vector<double> gap(8, 0.0);
  gap[2] = 50.0;
  EXPECT_LT(RerankerLoss(gap, 2).loss, 1e-20);

  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0, 2);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> s(8);
    for (double& v : s) v = g(rng);
    const size_t pos = rng() % 8;
    const CrossEntropy ce = RerankerLoss(s, pos);
    double sum = 0;
    for (double v : ce.grad) sum += v;
    EXPECT_NEAR(sum, 0.0, 1e-12);
    const auto numeric = testing::NumericGradient(
        [&](std::span<const double> x) { return RerankerLoss(x, pos).loss; }, s);
    for (size_t i = 0; i < s.size(); ++i) {
      EXPECT_TRUE(testing::RelClose(ce.grad[i], numeric[i], 1e-6)) << ce.grad[i] << " " << numeric[i];
    }
  }
}

TEST(RerankScoresFileTest, RoundTrip) {
  testing::TempDir dir;
  SaveRerankScores(dir / "r.jsonl", {{"q1", {{3, 1.5}, {4, -2.0}}}, {"q2", {{9, 0.0}}}});
  const auto back = LoadRerankScores(dir / "r.jsonl");
  EXPECT_EQ(back.at("q1").at(4), -2.0);
  EXPECT_EQ(back.at("q2").size(), 1u);
}

}  // namespace
}  // namespace r2d2
