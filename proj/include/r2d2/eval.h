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

#ifndef R2D2_EVAL_H_
#define R2D2_EVAL_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "r2d2/corpus.h"
#include "r2d2/pruner.h"

namespace r2d2 {

struct EvalReport {
  std::string metric;
  double value = 0.0;
  std::vector<uint8_t> per_example;
  std::string config_fingerprint;
  // Example-level failures from batch runs, as "index: message".
  std::vector<std::string> errors;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

// Lowercase, strip ASCII punctuation, drop the articles a/an/the as whole
// words, collapse whitespace.
std::string NormalizeAnswer(std::string_view text);

bool ExactMatch(std::string_view prediction, std::span<const std::string> golds);

// Mean exact match. Throws kInvalidArgument on length mismatch.
EvalReport EmScore(std::span<const std::string> predictions,
                   std::span<const QAExample> dataset);

// Fraction of examples whose top-k passages contain a tokenized answer.
// Throws kInvalidArgument when a list is shorter than k.
EvalReport AccuracyAtK(std::span<const std::vector<PassageId>> retrieved,
                       std::span<const QAExample> dataset,
                       const PassageStore& store, size_t k,
                       const Tokenizer& tokenizer = TokenizeSimple);

void SaveReport(const EvalReport& report, const std::filesystem::path& path);
EvalReport LoadReport(const std::filesystem::path& path);

enum class Readers { kExtractive, kGenerative, kBoth };
enum class FusionMode { kNone, kNaive, kAggregate, kAggregateDecision };

std::string ToString(Readers readers);
std::string ToString(FusionMode mode);
Readers ParseReaders(const std::string& text);
FusionMode ParseFusionMode(const std::string& text);

struct AblationRow {
  bool reranker = false;
  Readers readers = Readers::kExtractive;
  FusionMode fusion = FusionMode::kNone;
};

// The ten system variants: reranking off/on x {ext, gen, ext+gen naive,
// ext+gen aggr, ext+gen aggr+bd}.
std::vector<AblationRow> StandardAblationGrid();

struct AblationCell {
  AblationRow row;
  std::optional<double> em_pruned;
  std::optional<double> em_full;
  // em_pruned - em_full, when both are present.
  std::optional<double> delta;
};

struct AblationTable {
  std::string dataset;
  std::vector<AblationCell> cells;
  // Why absent cells are absent: "<cell index> <pruned|full>: <message>".
  std::vector<std::string> failures;

  std::string Render() const;
};

enum class IndexVariant { kPruned, kFull };

// Runs every row on both indices. A runner returning nullopt (or throwing)
// marks that cell absent rather than failing the table.
AblationTable AblationRun(
    const std::string& dataset_name, std::span<const AblationRow> rows,
    const std::function<std::optional<double>(const AblationRow&, IndexVariant)>& run);

struct SweepPoint {
  size_t size = 0;
  double em = 0.0;
};

// For each size: the golden passages plus the best-scoring (size - |golden|)
// non-golden passages, handed to `run` which returns EM. Throws
// kInvalidArgument when sizes are not ascending or a size is below |golden|.
std::vector<SweepPoint> IndexSizeSweep(
    std::span<const size_t> sizes, const RelevanceScores& scores,
    std::span<const PassageId> golden_ids,
    const std::function<double(const PrunedSet&)>& run);

}  // namespace r2d2

#endif  // R2D2_EVAL_H_
