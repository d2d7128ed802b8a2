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

#include <algorithm>
#include <cmath>
#include <sstream>

#include "r2d2/errors.h"
#include "r2d2/jsonl.h"

namespace r2d2 {
namespace {

constexpr std::array<const char*, kFeatureCount> kFeatureNames = {"e", "g", "r", "rr"};

std::vector<double> ActiveLogs(const FusionFeatures& x, const FeatureMask& mask) {
  std::vector<double> out;
  out.reserve(kFeatureCount);
  for (size_t f = 0; f < kFeatureCount; ++f) {
    if (!mask.active[f]) continue;
    if (!(x[f] > 0.0)) {
      Fail(ErrorCode::kInvalidArgument,
           std::string("feature ") + kFeatureNames[f] + " must be > 0");
    }
    out.push_back(std::log(x[f]));
  }
  return out;
}

Json OptionsToJson(const TrainOptions& options, double final_loss) {
  return {{"seed", options.seed},
          {"epochs", options.epochs},
          {"lr", options.lr},
          {"halve_on_increase", options.halve_on_increase},
          {"final_loss", final_loss}};
}

TrainOptions OptionsFromJson(const Json& doc, double* final_loss) {
  TrainOptions options;
  if (!doc.contains("training")) return options;
  const Json& t = doc.at("training");
  options.seed = t.value("seed", uint64_t{0});
  options.epochs = t.value("epochs", 0);
  options.lr = t.value("lr", 0.1);
  options.halve_on_increase = t.value("halve_on_increase", true);
  *final_loss = t.value("final_loss", 0.0);
  return options;
}

}  // namespace

FeatureMask FeatureMask::Parse(const std::string& text) {
  FeatureMask mask;
  mask.active.fill(false);
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), ::isspace), item.end());
    if (item.empty()) continue;
    const auto it = std::find(kFeatureNames.begin(), kFeatureNames.end(), item);
    if (it == kFeatureNames.end()) {
      Fail(ErrorCode::kInvalidArgument, "unknown fusion feature '" + item + "'");
    }
    mask.active[static_cast<size_t>(it - kFeatureNames.begin())] = true;
  }
  if (mask.count() == 0) Fail(ErrorCode::kInvalidArgument, "empty feature mask");
  return mask;
}

std::string FeatureMask::ToString() const {
  std::string out;
  for (size_t f = 0; f < kFeatureCount; ++f) {
    if (!active[f]) continue;
    if (!out.empty()) out += ',';
    out += kFeatureNames[f];
  }
  return out;
}

size_t FeatureMask::count() const {
  return static_cast<size_t>(std::count(active.begin(), active.end(), true));
}

std::vector<AnswerSpan> AnswerRerank(
    std::vector<AnswerSpan> spans,
    const std::unordered_map<std::string, double>& gen_logp) {
  for (AnswerSpan& span : spans) {
    auto it = gen_logp.find(span.text);
    if (it == gen_logp.end()) {
      Fail(ErrorCode::kMissingScore, "no generative score for span '" + span.text + "'");
    }
    span.logp_g = it->second;
  }
  std::stable_sort(spans.begin(), spans.end(),
                   [](const AnswerSpan& a, const AnswerSpan& b) {
                     return *a.logp_g > *b.logp_g;
                   });
  return spans;
}

double AggregateScore(const FusionFeatures& x, const AggregationModel& model) {
  const std::vector<double> logs = ActiveLogs(x, model.mask);
  if (logs.size() != model.w.size()) {
    Fail(ErrorCode::kDimensionMismatch, "weight count does not match the feature mask");
  }
  double score = model.b;
  for (size_t i = 0; i < logs.size(); ++i) score += model.w[i] * logs[i];
  return score;
}

LossAndGradient AggregationLoss(std::span<const AggregationExample> dataset,
                                const FeatureMask& mask,
                                std::span<const double> params) {
  const size_t k = mask.count();
  if (params.size() != k + 1) {
    Fail(ErrorCode::kDimensionMismatch, "expected one weight per feature plus bias");
  }
  if (dataset.empty()) Fail(ErrorCode::kInvalidArgument, "empty aggregation dataset");
  LossAndGradient out;
  out.grad.assign(k + 1, 0.0);
  std::vector<std::vector<double>> logs;
  std::vector<double> z;
  for (const AggregationExample& ex : dataset) {
    if (ex.candidates.empty() || ex.gt >= ex.candidates.size()) {
      Fail(ErrorCode::kInvalidArgument, "ground-truth index outside A_q");
    }
    logs.clear();
    z.clear();
    double max = -INFINITY;
    for (const FusionFeatures& x : ex.candidates) {
      logs.push_back(ActiveLogs(x, mask));
      double score = params[k];
      for (size_t i = 0; i < k; ++i) score += params[i] * logs.back()[i];
      z.push_back(score);
      max = std::max(max, score);
    }
    double total = 0.0;
    for (double v : z) total += std::exp(v - max);
    const double lse = max + std::log(total);
    out.loss += lse - z[ex.gt];
    for (size_t a = 0; a < z.size(); ++a) {
      const double p = std::exp(z[a] - lse);
      for (size_t i = 0; i < k; ++i) out.grad[i] += p * logs[a][i];
    }
    for (size_t i = 0; i < k; ++i) out.grad[i] -= logs[ex.gt][i];
    // The bias shifts every candidate equally, so its gradient is zero.
  }
  const double n = static_cast<double>(dataset.size());
  out.loss /= n;
  for (double& g : out.grad) g /= n;
  return out;
}

AggregationModel TrainAggregation(std::span<const AggregationExample> dataset,
                                  const FeatureMask& mask,
                                  const TrainOptions& options) {
  const size_t k = mask.count();
  const Objective objective = [&](std::span<const double> params, std::span<double> grad) {
    LossAndGradient lg = AggregationLoss(dataset, mask, params);
    std::copy(lg.grad.begin(), lg.grad.end(), grad.begin());
    return lg.loss;
  };
  const TrainResult result =
      MinimizeGradientDescent(objective, std::vector<double>(k + 1, 0.0), options);
  AggregationModel model;
  model.mask = mask;
  model.w.assign(result.params.begin(), result.params.begin() + static_cast<ptrdiff_t>(k));
  model.b = result.params[k];
  model.options = options;
  model.final_loss = result.final_loss;
  return model;
}

BestSpan BestAggregated(std::span<const FusionFeatures> candidates,
                        const AggregationModel& model) {
  if (candidates.empty()) Fail(ErrorCode::kInvalidArgument, "no candidate spans");
  BestSpan best{0, AggregateScore(candidates[0], model)};
  for (size_t i = 1; i < candidates.size(); ++i) {
    const double score = AggregateScore(candidates[i], model);
    if (score > best.score) best = {i, score};
  }
  return best;
}

double Sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

BceResult Bce(double logit, int target) {
  if (!std::isfinite(logit) || (target != 0 && target != 1)) {
    Fail(ErrorCode::kInvalidArgument, "BCE needs a finite logit and a 0/1 target");
  }
  const double t = target;
  return {std::max(logit, 0.0) - logit * t + std::log1p(std::exp(-std::fabs(logit))),
          Sigmoid(logit) - t};
}

LossAndGradient DecisionLoss(std::span<const DecisionExample> dataset,
                             std::span<const double> params) {
  if (dataset.empty()) Fail(ErrorCode::kInvalidArgument, "empty decision dataset");
  if (params.size() != 3) Fail(ErrorCode::kDimensionMismatch, "expected [w0, w1, b]");
  LossAndGradient out;
  out.grad.assign(3, 0.0);
  for (const DecisionExample& ex : dataset) {
    const double logit = params[0] * ex.s_agg + params[1] * ex.s_g_star + params[2];
    const BceResult r = Bce(logit, ex.target);
    out.loss += r.loss;
    out.grad[0] += r.grad * ex.s_agg;
    out.grad[1] += r.grad * ex.s_g_star;
    out.grad[2] += r.grad;
  }
  const double n = static_cast<double>(dataset.size());
  out.loss /= n;
  for (double& g : out.grad) g /= n;
  return out;
}

DecisionModel TrainBinaryDecision(std::span<const DecisionExample> dataset,
                                  const TrainOptions& options) {
  if (dataset.empty()) Fail(ErrorCode::kInvalidArgument, "empty decision dataset");
  const Objective objective = [&](std::span<const double> params, std::span<double> grad) {
    LossAndGradient lg = DecisionLoss(dataset, params);
    std::copy(lg.grad.begin(), lg.grad.end(), grad.begin());
    return lg.loss;
  };
  const TrainResult result =
      MinimizeGradientDescent(objective, std::vector<double>(3, 0.0), options);
  DecisionModel model;
  model.w = {result.params[0], result.params[1]};
  model.b = result.params[2];
  model.options = options;
  model.final_loss = result.final_loss;
  return model;
}

double DecisionLogit(double s_agg, double s_g_star, const DecisionModel& model) {
  return model.w[0] * s_agg + model.w[1] * s_g_star + model.b;
}

bool ChooseAbstractive(double s_agg, double s_g_star, const DecisionModel& model) {
  return Sigmoid(DecisionLogit(s_agg, s_g_star, model)) >= 0.5;
}

std::string Decide(const std::string& span_answer, const std::string& generated_answer,
                   double s_agg, double s_g_star, const DecisionModel& model) {
  return ChooseAbstractive(s_agg, s_g_star, model) ? generated_answer : span_answer;
}

void SaveAggregationModel(const AggregationModel& model,
                          const std::filesystem::path& path) {
  Json weights = Json::object();
  size_t i = 0;
  for (size_t f = 0; f < kFeatureCount; ++f) {
    if (model.mask.active[f]) weights[kFeatureNames[f]] = model.w.at(i++);
  }
  WriteJsonFile(path, {{"kind", "aggregation"},
                       {"feature_mask", model.mask.ToString()},
                       {"weights", weights},
                       {"bias", model.b},
                       {"training", OptionsToJson(model.options, model.final_loss)}});
}

AggregationModel LoadAggregationModel(const std::filesystem::path& path) {
  const Json doc = ReadJsonFile(path);
  AggregationModel model;
  try {
    if (doc.at("kind") != "aggregation") Fail(ErrorCode::kFormat, "not an aggregation model");
    model.mask = FeatureMask::Parse(doc.at("feature_mask").get<std::string>());
    for (size_t f = 0; f < kFeatureCount; ++f) {
      if (model.mask.active[f]) {
        model.w.push_back(doc.at("weights").at(kFeatureNames[f]).get<double>());
      }
    }
    model.b = doc.at("bias").get<double>();
    model.options = OptionsFromJson(doc, &model.final_loss);
  } catch (const Json::exception& e) {
    Fail(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
  return model;
}

void SaveDecisionModel(const DecisionModel& model, const std::filesystem::path& path) {
  WriteJsonFile(path, {{"kind", "binary_decision"},
                       {"weights", {{"s_agg", model.w[0]}, {"s_g_star", model.w[1]}}},
                       {"bias", model.b},
                       {"target_1", "abstractive"},
                       {"training", OptionsToJson(model.options, model.final_loss)}});
}

DecisionModel LoadDecisionModel(const std::filesystem::path& path) {
  const Json doc = ReadJsonFile(path);
  DecisionModel model;
  try {
    if (doc.at("kind") != "binary_decision") Fail(ErrorCode::kFormat, "not a decision model");
    model.w = {doc.at("weights").at("s_agg").get<double>(),
               doc.at("weights").at("s_g_star").get<double>()};
    model.b = doc.at("bias").get<double>();
    model.options = OptionsFromJson(doc, &model.final_loss);
  } catch (const Json::exception& e) {
    Fail(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
  return model;
}

}  // namespace r2d2
