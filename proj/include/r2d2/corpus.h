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

#ifndef R2D2_CORPUS_H_
#define R2D2_CORPUS_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "r2d2/passage_store.h"
#include "r2d2/span_annotator.h"

namespace r2d2 {

// True when any answer occurs verbatim (token level) in the passage context.
bool ContainsAnswer(const Passage& passage,
                    std::span<const std::string> answers,
                    const Tokenizer& tokenizer = TokenizeSimple);

// Keeps examples that have a golden passage or an exact answer match in
// their retrieved list. `retrieved[i]` belongs to `examples[i]`.
std::vector<QAExample> FilterForReranker(
    std::span<const QAExample> examples,
    std::span<const std::vector<PassageId>> retrieved,
    const PassageStore& store, const Tokenizer& tokenizer = TokenizeSimple);

// Keeps examples with an exact answer match in the golden passage or in the
// top-1 retrieved passage.
std::vector<QAExample> FilterForReader(std::span<const QAExample> examples,
                                       std::span<const PassageId> top1,
                                       const PassageStore& store,
                                       const Tokenizer& tokenizer = TokenizeSimple);

enum class Relevance : uint8_t { kNegative = 0, kPositive = 1 };

struct GoldenEntry {
  PassageId passage_id = 0;
  Relevance label = Relevance::kNegative;

  friend bool operator==(const GoldenEntry&, const GoldenEntry&) = default;
};

struct GoldenDataset {
  std::vector<GoldenEntry> entries;

  size_t CountLabel(Relevance label) const;
  friend bool operator==(const GoldenDataset&, const GoldenDataset&) = default;
};

// One positive per golden-annotated example followed by `neg_per_pos`
// negatives drawn uniformly without replacement from passages that are
// nobody's golden passage. Negatives may repeat across examples.
GoldenDataset BuildPrunerDataset(std::span<const QAExample> examples,
                                 const PassageStore& store, int neg_per_pos,
                                 uint64_t seed);

struct PrunerEvalSplits {
  GoldenDataset dev;
  GoldenDataset test;
};

// Dev examples with golden passages are assigned to dev or test 1:2 by a
// stable hash of their key, each with one negative (balanced splits).
PrunerEvalSplits BuildPrunerEvalSplits(std::span<const QAExample> examples,
                                       const PassageStore& store,
                                       uint64_t seed);

void SaveGoldenDataset(const std::filesystem::path& path,
                       const GoldenDataset& dataset);
GoldenDataset LoadGoldenDataset(const std::filesystem::path& path);

}  // namespace r2d2

#endif  // R2D2_CORPUS_H_
