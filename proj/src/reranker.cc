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

#include <random>
#include <unordered_set>

#include "r2d2/corpus.h"
#include "r2d2/jsonl.h"

namespace r2d2 {

std::vector<PassageId> CandidateList::ids() const {
  std::vector<PassageId> out;
  out.reserve(entries.size());
  for (const Candidate& c : entries) out.push_back(c.passage_id);
  return out;
}

std::map<PassageId, double> RerankDistribution(const CandidateList& candidates,
                                               const RerankScores& scores) {
  std::map<PassageId, double> restricted;
  for (const Candidate& c : candidates.entries) {
    auto it = scores.find(c.passage_id);
    if (it == scores.end()) {
      Fail(ErrorCode::kMissingScore, "no rerank score for passage " +
                                         std::to_string(c.passage_id));
    }
    restricted.emplace(c.passage_id, it->second);
  }
  return SoftmaxOverSet(restricted);
}

CandidateList ApplyRerank(const CandidateList& candidates,
                          const RerankScores& scores, size_t keep) {
  if (keep > candidates.entries.size()) {
    Fail(ErrorCode::kInvalidArgument, "keep exceeds the candidate count");
  }
  struct Row {
    Candidate candidate;
    double rerank;
  };
  std::vector<Row> rows;
  rows.reserve(candidates.entries.size());
  for (const Candidate& c : candidates.entries) {
    auto it = scores.find(c.passage_id);
    if (it == scores.end()) {
      Fail(ErrorCode::kMissingScore, "no rerank score for passage " +
                                         std::to_string(c.passage_id));
    }
    rows.push_back({c, it->second});
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.rerank != b.rerank) return a.rerank > b.rerank;
    if (a.candidate.retriever_score != b.candidate.retriever_score) {
      return a.candidate.retriever_score > b.candidate.retriever_score;
    }
    return a.candidate.passage_id < b.candidate.passage_id;
  });
  CandidateList out;
  out.question_key = candidates.question_key;
  for (size_t i = 0; i < keep; ++i) out.entries.push_back(rows[i].candidate);
  return out;
}

RerankerBatch BuildTrainingBatch(const QAExample& example,
                                 std::span<const PassageId> retrieved,
                                 const PassageStore& store, size_t n_negatives,
                                 uint64_t seed, const Tokenizer& tokenizer) {
  std::vector<PassageId> without_answer;
  std::optional<PassageId> best_with_answer;
  for (PassageId id : retrieved) {
    if (ContainsAnswer(store.at(id), example.answers, tokenizer)) {
      if (!best_with_answer) best_with_answer = id;
    } else if (id != example.golden_passage_id) {
      without_answer.push_back(id);
    }
  }

  RerankerBatch batch;
  if (example.golden_passage_id) {
    store.at(*example.golden_passage_id);
    batch.positive_id = *example.golden_passage_id;
  } else if (best_with_answer) {
    batch.positive_id = *best_with_answer;
  } else {
    Fail(ErrorCode::kShouldHaveBeenFiltered,
         "no positive passage for question '" + example.question + "'");
  }

  // Partial Fisher-Yates over the answer-free pool.
  std::mt19937_64 rng(seed);
  const size_t take = std::min(n_negatives, without_answer.size());
  for (size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<size_t> pick(i, without_answer.size() - 1);
    std::swap(without_answer[i], without_answer[pick(rng)]);
  }
  batch.negative_ids.assign(without_answer.begin(),
                            without_answer.begin() + static_cast<ptrdiff_t>(take));
  return batch;
}

CrossEntropy RerankerLoss(std::span<const double> scores, size_t positive_index) {
  if (scores.empty() || positive_index >= scores.size()) {
    Fail(ErrorCode::kInvalidArgument, "positive index outside the batch");
  }
  double max = -INFINITY;
  for (double s : scores) {
    if (!std::isfinite(s)) Fail(ErrorCode::kInvalidArgument, "non-finite score");
    max = std::max(max, s);
  }
  double total = 0.0;
  for (double s : scores) total += std::exp(s - max);
  const double log_total = max + std::log(total);

  CrossEntropy out;
  out.loss = log_total - scores[positive_index];
  out.grad.reserve(scores.size());
  for (double s : scores) out.grad.push_back(std::exp(s - log_total));
  out.grad[positive_index] -= 1.0;
  return out;
}

std::unordered_map<std::string, RerankScores> LoadRerankScores(
    const std::filesystem::path& path) {
  std::unordered_map<std::string, RerankScores> out;
  ForEachJsonLine(path, [&](const Json& rec, size_t line) {
    try {
      RerankScores scores;
      for (const auto& [pid, value] : rec.at("scores").items()) {
        scores[std::stoull(pid)] = value.get<double>();
      }
      out[rec.at("question_key").get<std::string>()] = std::move(scores);
    } catch (const std::exception& e) {
      Fail(ErrorCode::kParse, path.string() + ":" + std::to_string(line) + ": " +
                                  e.what());
    }
  });
  return out;
}

void SaveRerankScores(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, RerankScores>>& rows) {
  std::vector<Json> records;
  for (const auto& [key, scores] : rows) {
    Json s = Json::object();
    for (const auto& [pid, value] : scores) s[std::to_string(pid)] = value;
    records.push_back({{"question_key", key}, {"scores", s}});
  }
  WriteJsonLines(path, records);
}

}  // namespace r2d2
