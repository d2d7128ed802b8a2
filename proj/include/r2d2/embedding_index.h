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

#ifndef R2D2_EMBEDDING_INDEX_H_
#define R2D2_EMBEDDING_INDEX_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "r2d2/fp16.h"
#include "r2d2/passage_store.h"

namespace r2d2 {

// n x d binary16 passage embeddings, row-major, one passage id per row.
class EmbeddingMatrix {
 public:
  explicit EmbeddingMatrix(uint32_t dim);

  // Converts `values` (n * dim floats, row-major) to binary16. Throws
  // kInvalidArgument for NaN, kOverflow for values beyond the binary16
  // range, and kDuplicateKey for repeated row ids.
  static EmbeddingMatrix FromFloats(uint32_t dim, std::vector<PassageId> row_ids,
                                    std::span<const float> values);

  // Takes already-encoded rows; validates like FromFloats.
  static EmbeddingMatrix FromHalves(uint32_t dim, std::vector<PassageId> row_ids,
                                    std::vector<Half> values);

  size_t rows() const { return row_ids_.size(); }
  uint32_t dim() const { return dim_; }
  const std::vector<PassageId>& row_ids() const { return row_ids_; }
  std::span<const Half> values() const { return values_; }
  std::span<const Half> row(size_t i) const {
    return std::span<const Half>(values_).subspan(i * dim_, dim_);
  }
  // Widened copy of one row.
  std::vector<float> RowAsFloat(size_t i) const;

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;

 private:
  void Validate() const;

  uint32_t dim_;
  std::vector<PassageId> row_ids_;
  std::vector<Half> values_;
};

struct RetrievalResult {
  PassageId passage_id = 0;
  float score = 0.0f;

  friend bool operator==(const RetrievalResult&, const RetrievalResult&) = default;
};

// File layout: "R2D2EMB1", u32 n, u32 d, n u64 ids, n*d binary16 values,
// all little-endian.
void WriteIndex(const EmbeddingMatrix& matrix, const std::filesystem::path& path);
EmbeddingMatrix ReadIndex(const std::filesystem::path& path);

// Exact top-k maximum inner product search. Rows are widened to fp32 and
// each dot product accumulates in fp32. Results are sorted by score
// descending, ties by ascending passage id. Requires k <= rows().
std::vector<RetrievalResult> Search(const EmbeddingMatrix& index,
                                    std::span<const float> query, size_t k,
                                    unsigned threads = 1);

// Rows whose id is in `keep_ids`, in their original order. Throws kLookup
// for ids that are not rows of `index`.
EmbeddingMatrix SubsetIndex(const EmbeddingMatrix& index,
                            std::span<const PassageId> keep_ids);

}  // namespace r2d2

#endif  // R2D2_EMBEDDING_INDEX_H_
