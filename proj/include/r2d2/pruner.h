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

#ifndef R2D2_PRUNER_H_
#define R2D2_PRUNER_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "r2d2/corpus.h"
#include "r2d2/embedding_index.h"
#include "r2d2/trainer.h"

namespace r2d2 {

// Apriori relevance P(r | p) per passage, each strictly inside (0, 1).
class RelevanceScores {
 public:
  RelevanceScores() = default;
  // Throws kInvalidArgument for probabilities outside (0, 1).
  explicit RelevanceScores(std::map<PassageId, double> scores);

  size_t size() const { return scores_.size(); }
  const std::map<PassageId, double>& values() const { return scores_; }
  const double* find(PassageId id) const;

 private:
  std::map<PassageId, double> scores_;
};

struct PrunedSet {
  std::vector<PassageId> ids;  // ascending
  double tau = 0.0;
  size_t golden_added = 0;

  bool contains(PassageId id) const;
  friend bool operator==(const PrunedSet&, const PrunedSet&) = default;
};

// {i : score(i) > tau}. Throws kInvalidArgument unless 0 < tau < 1.
PrunedSet SelectByThreshold(const RelevanceScores& scores, double tau);

// The n best-scoring ids, boundary ties broken by ascending id. The reported
// tau is the (n+1)-th largest score, or 0 when n == |scores|.
PrunedSet PoolTopN(const RelevanceScores& scores, size_t n);

// Union with the golden passages; `golden_added` counts the new ids.
PrunedSet InjectGolden(const PrunedSet& pruned, std::span<const PassageId> golden_ids);

// Fraction of entries where (score > threshold) agrees with the label.
// Throws kMissingScore for entries without a score.
double EvaluatePruner(const RelevanceScores& scores, const GoldenDataset& dataset,
                      double decision_threshold = 0.5);

struct EmbeddingSetStats {
  double mean_l2 = 0.0;  // || mean(P) - mean(N) ||
  double var_l2 = 0.0;   // || var(P) - var(N) ||, per-dimension population variance
  double mean_norm_p = 0.0;
  double mean_norm_n = 0.0;
};

EmbeddingSetStats ComputeEmbeddingSetStats(const EmbeddingMatrix& positives,
                                           const EmbeddingMatrix& negatives);

struct MembershipClassifier {
  std::vector<double> weights;
  double bias = 0.0;
  double dev_accuracy = 0.0;
  double final_loss = 0.0;
};

// Logistic regression separating P from an equally sized N sample. A seeded
// 20% of each class is held out for dev accuracy.
MembershipClassifier TrainMembershipClassifier(const EmbeddingMatrix& positives,
                                               const EmbeddingMatrix& negatives,
                                               const TrainOptions& options);

// JSON-lines {"id": int, "p": float}.
RelevanceScores LoadRelevanceScores(const std::filesystem::path& path);
void SaveRelevanceScores(const std::filesystem::path& path,
                         const RelevanceScores& scores);

// One JSON header line {"tau", "count", "golden_added"} then one id per line.
void SavePrunedSet(const std::filesystem::path& path, const PrunedSet& set);
PrunedSet LoadPrunedSet(const std::filesystem::path& path);

}  // namespace r2d2

#endif  // R2D2_PRUNER_H_
