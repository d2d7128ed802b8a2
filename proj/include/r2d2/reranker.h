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

#ifndef R2D2_RERANKER_H_
#define R2D2_RERANKER_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "r2d2/errors.h"
#include "r2d2/passage_store.h"
#include "r2d2/span_annotator.h"

namespace r2d2 {

inline constexpr size_t kMaxCandidates = 400;

struct Candidate {
  PassageId passage_id = 0;
  double retriever_score = 0.0;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct CandidateList {
  std::string question_key;
  std::vector<Candidate> entries;

  std::vector<PassageId> ids() const;
};

// Unnormalized cross-encoder logits per passage.
using RerankScores = std::map<PassageId, double>;

// exp(f(y)) / sum_{x in D} exp(f(x)) over the keys of `scores`, evaluated
// with the maximum subtracted. Throws kInvalidArgument on empty or
// non-finite input.
template <typename Key>
std::map<Key, double> SoftmaxOverSet(const std::map<Key, double>& scores) {
  if (scores.empty()) Fail(ErrorCode::kInvalidArgument, "softmax over an empty set");
  double max = -INFINITY;
  for (const auto& [key, value] : scores) {
    if (!std::isfinite(value)) {
      Fail(ErrorCode::kInvalidArgument, "softmax over a non-finite score");
    }
    max = std::max(max, value);
  }
  double total = 0.0;
  for (const auto& [key, value] : scores) total += std::exp(value - max);
  std::map<Key, double> out;
  for (const auto& [key, value] : scores) {
    out.emplace_hint(out.end(), key, std::exp(value - max) / total);
  }
  return out;
}

// P_rr over the candidate set. Throws kMissingScore when a candidate has
// no score.
std::map<PassageId, double> RerankDistribution(const CandidateList& candidates,
                                               const RerankScores& scores);

// Sorted by rerank score descending, then retriever score descending, then
// id ascending; truncated to `keep`.
CandidateList ApplyRerank(const CandidateList& candidates,
                          const RerankScores& scores, size_t keep);

struct RerankerBatch {
  PassageId positive_id = 0;
  std::vector<PassageId> negative_ids;
};

// Positive: the golden passage when known, else the best-ranked retrieved
// passage containing an answer. Negatives: drawn uniformly without
// replacement from retrieved passages without an answer (at most
// `n_negatives`). Throws kShouldHaveBeenFiltered when no positive exists.
RerankerBatch BuildTrainingBatch(const QAExample& example,
                                 std::span<const PassageId> retrieved,
                                 const PassageStore& store, size_t n_negatives,
                                 uint64_t seed,
                                 const Tokenizer& tokenizer = TokenizeSimple);

struct CrossEntropy {
  double loss = 0.0;
  std::vector<double> grad;
};

// -log softmax(scores)[positive], gradient softmax(scores) - onehot.
CrossEntropy RerankerLoss(std::span<const double> scores, size_t positive_index);

// JSON-lines {"question_key": str, "scores": {"<pid>": float}}.
std::unordered_map<std::string, RerankScores> LoadRerankScores(
    const std::filesystem::path& path);
void SaveRerankScores(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, RerankScores>>& rows);

}  // namespace r2d2

#endif  // R2D2_RERANKER_H_
