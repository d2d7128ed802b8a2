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

#include "r2d2/pruner.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "r2d2/errors.h"
#include "r2d2/fusion.h"
#include "r2d2/jsonl.h"

namespace r2d2 {
namespace {

struct Moments {
  std::vector<double> mean;
  std::vector<double> var;
  double mean_norm = 0.0;
};

Moments ComputeMoments(const EmbeddingMatrix& m) {
  const size_t n = m.rows();
  const size_t d = m.dim();
  Moments out;
  out.mean.assign(d, 0.0);
  out.var.assign(d, 0.0);
  for (size_t i = 0; i < n; ++i) {
    const std::vector<float> row = m.RowAsFloat(i);
    double sq = 0.0;
    for (size_t j = 0; j < d; ++j) {
      out.mean[j] += row[j];
      sq += static_cast<double>(row[j]) * row[j];
    }
    out.mean_norm += std::sqrt(sq);
  }
  for (double& v : out.mean) v /= static_cast<double>(n);
  for (size_t i = 0; i < n; ++i) {
    const std::vector<float> row = m.RowAsFloat(i);
    for (size_t j = 0; j < d; ++j) {
      const double diff = row[j] - out.mean[j];
      out.var[j] += diff * diff;
    }
  }
  for (double& v : out.var) v /= static_cast<double>(n);
  out.mean_norm /= static_cast<double>(n);
  return out;
}

double L2Distance(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc);
}

}  // namespace

RelevanceScores::RelevanceScores(std::map<PassageId, double> scores)
    : scores_(std::move(scores)) {
  for (const auto& [id, p] : scores_) {
    if (!(p > 0.0 && p < 1.0)) {
      Fail(ErrorCode::kInvalidArgument, "relevance of passage " + std::to_string(id) +
                                            " is outside (0, 1)");
    }
  }
}

const double* RelevanceScores::find(PassageId id) const {
  auto it = scores_.find(id);
  return it == scores_.end() ? nullptr : &it->second;
}

bool PrunedSet::contains(PassageId id) const {
  return std::binary_search(ids.begin(), ids.end(), id);
}

PrunedSet SelectByThreshold(const RelevanceScores& scores, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) Fail(ErrorCode::kInvalidArgument, "tau must be in (0, 1)");
  PrunedSet out;
  out.tau = tau;
  for (const auto& [id, p] : scores.values()) {
    if (p > tau) out.ids.push_back(id);
  }
  return out;
}

PrunedSet PoolTopN(const RelevanceScores& scores, size_t n) {
  if (n < 1 || n > scores.size()) {
    Fail(ErrorCode::kInvalidArgument, "pool size " + std::to_string(n) +
                                          " outside [1, " + std::to_string(scores.size()) + "]");
  }
  std::vector<std::pair<PassageId, double>> ranked(scores.values().begin(),
                                                   scores.values().end());
  auto better = [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  };
  const size_t sorted_prefix = std::min(n + 1, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<ptrdiff_t>(sorted_prefix),
                    ranked.end(), better);
  PrunedSet out;
  out.tau = n == ranked.size() ? 0.0 : ranked[n].second;
  for (size_t i = 0; i < n; ++i) out.ids.push_back(ranked[i].first);
  std::sort(out.ids.begin(), out.ids.end());
  return out;
}

PrunedSet InjectGolden(const PrunedSet& pruned, std::span<const PassageId> golden_ids) {
  std::vector<PassageId> golden(golden_ids.begin(), golden_ids.end());
  std::sort(golden.begin(), golden.end());
  golden.erase(std::unique(golden.begin(), golden.end()), golden.end());
  PrunedSet out;
  out.tau = pruned.tau;
  std::set_union(pruned.ids.begin(), pruned.ids.end(), golden.begin(), golden.end(),
                 std::back_inserter(out.ids));
  out.golden_added = pruned.golden_added + (out.ids.size() - pruned.ids.size());
  return out;
}

double EvaluatePruner(const RelevanceScores& scores, const GoldenDataset& dataset,
                      double decision_threshold) {
  if (dataset.entries.empty()) Fail(ErrorCode::kInvalidArgument, "empty golden dataset");
  size_t correct = 0;
  for (const GoldenEntry& entry : dataset.entries) {
    const double* p = scores.find(entry.passage_id);
    if (p == nullptr) {
      Fail(ErrorCode::kMissingScore, "no relevance score for passage " +
                                         std::to_string(entry.passage_id));
    }
    const bool predicted = *p > decision_threshold;
    if (predicted == (entry.label == Relevance::kPositive)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.entries.size());
}

EmbeddingSetStats ComputeEmbeddingSetStats(const EmbeddingMatrix& positives,
                                           const EmbeddingMatrix& negatives) {
  if (positives.rows() == 0 || negatives.rows() == 0) {
    Fail(ErrorCode::kInvalidArgument, "embedding statistics need non-empty sets");
  }
  if (positives.dim() != negatives.dim()) {
    Fail(ErrorCode::kDimensionMismatch, "embedding sets differ in dimension");
  }
  const Moments p = ComputeMoments(positives);
  const Moments n = ComputeMoments(negatives);
  return {L2Distance(p.mean, n.mean), L2Distance(p.var, n.var), p.mean_norm, n.mean_norm};
}

MembershipClassifier TrainMembershipClassifier(const EmbeddingMatrix& positives,
                                               const EmbeddingMatrix& negatives,
                                               const TrainOptions& options) {
  if (positives.rows() != negatives.rows() || positives.rows() < 2) {
    Fail(ErrorCode::kInvalidArgument, "membership probe needs two equal sets of >= 2 rows");
  }
  if (positives.dim() != negatives.dim()) {
    Fail(ErrorCode::kDimensionMismatch, "embedding sets differ in dimension");
  }
  const size_t n = positives.rows();
  const size_t d = positives.dim();
  const size_t dev_per_class = std::max<size_t>(1, n / 5);

  struct Row {
    std::vector<float> x;
    int label;
  };
  std::vector<Row> train;
  std::vector<Row> dev;
  std::mt19937_64 rng(options.seed);
  for (const auto* source : {&positives, &negatives}) {
    const int label = source == &positives ? 1 : 0;
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t i = 0; i < n; ++i) {
      auto& split = i < dev_per_class ? dev : train;
      split.push_back({source->RowAsFloat(order[i]), label});
    }
  }

  auto logit = [d](const Row& row, std::span<const double> params) {
    double z = params[d];
    for (size_t j = 0; j < d; ++j) z += params[j] * row.x[j];
    return z;
  };
  const Objective objective = [&](std::span<const double> params, std::span<double> grad) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    for (const Row& row : train) {
      const BceResult r = Bce(logit(row, params), row.label);
      loss += r.loss;
      for (size_t j = 0; j < d; ++j) grad[j] += r.grad * row.x[j];
      grad[d] += r.grad;
    }
    const double count = static_cast<double>(train.size());
    for (double& g : grad) g /= count;
    return loss / count;
  };
  const TrainResult result =
      MinimizeGradientDescent(objective, std::vector<double>(d + 1, 0.0), options);

  MembershipClassifier out;
  out.weights.assign(result.params.begin(), result.params.begin() + static_cast<ptrdiff_t>(d));
  out.bias = result.params[d];
  out.final_loss = result.final_loss;
  size_t correct = 0;
  for (const Row& row : dev) {
    const bool predicted = Sigmoid(logit(row, result.params)) >= 0.5;
    if (predicted == (row.label == 1)) ++correct;
  }
  out.dev_accuracy = static_cast<double>(correct) / static_cast<double>(dev.size());
  return out;
}

RelevanceScores LoadRelevanceScores(const std::filesystem::path& path) {
  std::map<PassageId, double> scores;
  ForEachJsonLine(path, [&](const Json& rec, size_t line) {
    try {
      const PassageId id = rec.at("id").get<PassageId>();
      if (!scores.emplace(id, rec.at("p").get<double>()).second) {
        Fail(ErrorCode::kDuplicateKey, path.string() + ":" + std::to_string(line) +
                                           ": duplicate id " + std::to_string(id));
      }
    } catch (const Json::exception& e) {
      Fail(ErrorCode::kParse, path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return RelevanceScores(std::move(scores));
}

void SaveRelevanceScores(const std::filesystem::path& path,
                         const RelevanceScores& scores) {
  std::vector<Json> records;
  for (const auto& [id, p] : scores.values()) records.push_back({{"id", id}, {"p", p}});
  WriteJsonLines(path, records);
}

void SavePrunedSet(const std::filesystem::path& path, const PrunedSet& set) {
  std::ofstream out(path);
  if (!out) Fail(ErrorCode::kIo, "cannot write " + path.string());
  out << Json{{"tau", set.tau}, {"count", set.ids.size()}, {"golden_added", set.golden_added}}
             .dump()
      << '\n';
  for (PassageId id : set.ids) out << id << '\n';
}

PrunedSet LoadPrunedSet(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorCode::kIo, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) Fail(ErrorCode::kFormat, "missing pruned-set header");
  PrunedSet set;
  size_t count = 0;
  try {
    const Json header = Json::parse(line);
    set.tau = header.at("tau").get<double>();
    count = header.at("count").get<size_t>();
    set.golden_added = header.value("golden_added", size_t{0});
  } catch (const Json::exception& e) {
    Fail(ErrorCode::kFormat, path.string() + ": bad header: " + e.what());
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      set.ids.push_back(std::stoull(line));
    } catch (const std::exception&) {
      Fail(ErrorCode::kParse, path.string() + ": bad id '" + line + "'");
    }
  }
  if (set.ids.size() != count) Fail(ErrorCode::kFormat, "pruned-set count mismatch");
  std::sort(set.ids.begin(), set.ids.end());
  return set;
}

}  // namespace r2d2
