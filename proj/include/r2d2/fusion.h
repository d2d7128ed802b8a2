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

#ifndef R2D2_FUSION_H_
#define R2D2_FUSION_H_

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "r2d2/ext_reader.h"
#include "r2d2/trainer.h"

namespace r2d2 {

// Components of x(a) = [P_e(a), P_g(a), P_r(p_a), P_rr(p_a)].
enum class Feature : size_t { kExtractive = 0, kGenerative = 1, kRetriever = 2, kReranker = 3 };
inline constexpr size_t kFeatureCount = 4;

using FusionFeatures = std::array<double, kFeatureCount>;

struct FeatureMask {
  std::array<bool, kFeatureCount> active{true, true, true, true};

  static FeatureMask All() { return {}; }
  // Comma separated subset of e, g, r, rr, e.g. "e,g,rr".
  static FeatureMask Parse(const std::string& text);
  std::string ToString() const;
  size_t count() const;
  bool has(Feature f) const { return active[static_cast<size_t>(f)]; }

  friend bool operator==(const FeatureMask&, const FeatureMask&) = default;
};

struct AggregationModel {
  FeatureMask mask;
  std::vector<double> w;  // one weight per active feature, in feature order
  double b = 0.0;
  // Training metadata kept for the model file.
  TrainOptions options;
  double final_loss = 0.0;
};

struct DecisionModel {
  std::array<double, 2> w{0.0, 0.0};  // over [s_agg, s_g*]
  double b = 0.0;
  TrainOptions options;
  double final_loss = 0.0;
};

// Sorts spans by generative log-probability descending (stable for ties) and
// records it in AnswerSpan::logp_g. Lookup is by exact span text. Throws
// kMissingScore for spans without a score.
std::vector<AnswerSpan> AnswerRerank(
    std::vector<AnswerSpan> spans,
    const std::unordered_map<std::string, double>& gen_logp);

// w . log x + b over the active features. Throws kInvalidArgument for
// non-positive active features.
double AggregateScore(const FusionFeatures& x, const AggregationModel& model);

struct AggregationExample {
  std::vector<FusionFeatures> candidates;  // A_q
  size_t gt = 0;
};

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> grad;  // [w..., b]
};

// Mean over questions of -log softmax_{a in A_q}(w . log x(a) + b)[gt].
// `params` is [w..., b] with one weight per active feature.
LossAndGradient AggregationLoss(std::span<const AggregationExample> dataset,
                                const FeatureMask& mask,
                                std::span<const double> params);

// Zero-initialized full-batch gradient descent on AggregationLoss.
AggregationModel TrainAggregation(std::span<const AggregationExample> dataset,
                                  const FeatureMask& mask,
                                  const TrainOptions& options);

struct BestSpan {
  size_t index = 0;
  double score = 0.0;
};

// Argmax of AggregateScore; ties keep the earlier (higher extractive) rank.
BestSpan BestAggregated(std::span<const FusionFeatures> candidates,
                        const AggregationModel& model);

struct BceResult {
  double loss = 0.0;
  double grad = 0.0;  // d loss / d logit
};

// Binary cross-entropy on a logit, in the stable form
// max(l, 0) - l t + log(1 + exp(-|l|)).
BceResult Bce(double logit, int target);

double Sigmoid(double x);

// Target 1 means the generated (abstractive) answer is the correct one.
struct DecisionExample {
  double s_agg = 0.0;
  double s_g_star = 0.0;
  int target = 0;
};

LossAndGradient DecisionLoss(std::span<const DecisionExample> dataset,
                             std::span<const double> params);

// Throws kInvalidArgument on an empty dataset.
DecisionModel TrainBinaryDecision(std::span<const DecisionExample> dataset,
                                  const TrainOptions& options);

double DecisionLogit(double s_agg, double s_g_star, const DecisionModel& model);

// sigmoid(logit) >= 0.5 selects the abstractive answer.
bool ChooseAbstractive(double s_agg, double s_g_star, const DecisionModel& model);

std::string Decide(const std::string& span_answer,
                   const std::string& generated_answer, double s_agg,
                   double s_g_star, const DecisionModel& model);

void SaveAggregationModel(const AggregationModel& model,
                          const std::filesystem::path& path);
AggregationModel LoadAggregationModel(const std::filesystem::path& path);
void SaveDecisionModel(const DecisionModel& model, const std::filesystem::path& path);
DecisionModel LoadDecisionModel(const std::filesystem::path& path);

}  // namespace r2d2

#endif  // R2D2_FUSION_H_
