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

#include "r2d2/embedding_index.h"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "r2d2/errors.h"

namespace r2d2 {
namespace {

constexpr char kMagic[8] = {'R', '2', 'D', '2', 'E', 'M', 'B', '1'};
constexpr size_t kHeaderBytes = sizeof(kMagic) + 2 * sizeof(uint32_t);

static_assert(std::endian::native == std::endian::little,
              "index IO assumes a little-endian host");

const std::array<float, 65536>& WideningTable() {
  static const auto table = [] {
    std::array<float, 65536> t{};
    for (uint32_t bits = 0; bits < 65536; ++bits) {
      t[bits] = FromHalf(Half{static_cast<uint16_t>(bits)});
    }
    return t;
  }();
  return table;
}

template <typename T>
void Put(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(uint32_t dim) : dim_(dim) {
  if (dim == 0) Fail(ErrorCode::kInvalidArgument, "embedding dimension must be > 0");
}

EmbeddingMatrix EmbeddingMatrix::FromFloats(uint32_t dim,
                                            std::vector<PassageId> row_ids,
                                            std::span<const float> values) {
  EmbeddingMatrix m(dim);
  if (values.size() != row_ids.size() * dim) {
    Fail(ErrorCode::kDimensionMismatch,
         "expected " + std::to_string(row_ids.size() * dim) + " values, got " +
             std::to_string(values.size()));
  }
  m.values_.reserve(values.size());
  for (size_t i = 0; i < values.size(); ++i) {
    const Half h = ToHalf(values[i]);
    if (!IsFinite(h)) {
      Fail(ErrorCode::kOverflow, "value " + std::to_string(values[i]) +
                                     " at position " + std::to_string(i) +
                                     " exceeds the binary16 range");
    }
    m.values_.push_back(h);
  }
  m.row_ids_ = std::move(row_ids);
  m.Validate();
  return m;
}

EmbeddingMatrix EmbeddingMatrix::FromHalves(uint32_t dim,
                                            std::vector<PassageId> row_ids,
                                            std::vector<Half> values) {
  EmbeddingMatrix m(dim);
  if (values.size() != row_ids.size() * dim) {
    Fail(ErrorCode::kDimensionMismatch, "value count does not match n * d");
  }
  m.row_ids_ = std::move(row_ids);
  m.values_ = std::move(values);
  m.Validate();
  return m;
}

void EmbeddingMatrix::Validate() const {
  for (Half h : values_) {
    if (!IsFinite(h)) Fail(ErrorCode::kFormat, "non-finite binary16 value");
  }
  std::unordered_set<PassageId> seen;
  seen.reserve(row_ids_.size());
  for (PassageId id : row_ids_) {
    if (!seen.insert(id).second) {
      Fail(ErrorCode::kDuplicateKey, "duplicate row id " + std::to_string(id));
    }
  }
}

std::vector<float> EmbeddingMatrix::RowAsFloat(size_t i) const {
  const auto& table = WideningTable();
  std::vector<float> out(dim_);
  const auto r = row(i);
  for (uint32_t j = 0; j < dim_; ++j) out[j] = table[r[j].bits];
  return out;
}

void WriteIndex(const EmbeddingMatrix& matrix, const std::filesystem::path& path) {
  if (matrix.rows() > UINT32_MAX) Fail(ErrorCode::kOverflow, "too many rows");
  std::ofstream out(path, std::ios::binary);
  if (!out) Fail(ErrorCode::kIo, "cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  Put(out, static_cast<uint32_t>(matrix.rows()));
  Put(out, matrix.dim());
  out.write(reinterpret_cast<const char*>(matrix.row_ids().data()),
            static_cast<std::streamsize>(matrix.rows() * sizeof(uint64_t)));
  out.write(reinterpret_cast<const char*>(matrix.values().data()),
            static_cast<std::streamsize>(matrix.values().size() * sizeof(uint16_t)));
  if (!out) Fail(ErrorCode::kIo, "short write to " + path.string());
}

EmbeddingMatrix ReadIndex(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) Fail(ErrorCode::kIo, "cannot open " + path.string());
  const auto file_size = static_cast<uint64_t>(in.tellg());
  in.seekg(0);
  if (file_size < kHeaderBytes) Fail(ErrorCode::kTruncated, "file shorter than header");

  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    Fail(ErrorCode::kFormat, "bad magic in " + path.string());
  }
  uint32_t n = 0;
  uint32_t d = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  in.read(reinterpret_cast<char*>(&d), sizeof(d));
  if (d == 0) Fail(ErrorCode::kFormat, "zero dimension");

  // u32 * u32 fits in u64; the byte count needs the extra factor checked.
  const uint64_t cells = static_cast<uint64_t>(n) * d;
  if (cells > (UINT64_MAX - kHeaderBytes) / 2 - static_cast<uint64_t>(n) * 8) {
    Fail(ErrorCode::kOverflow, "header dimensions overflow");
  }
  const uint64_t expected = kHeaderBytes + static_cast<uint64_t>(n) * 8 + cells * 2;
  if (file_size < expected) {
    Fail(ErrorCode::kTruncated, "payload needs " + std::to_string(expected) +
                                    " bytes, file has " + std::to_string(file_size));
  }
  if (file_size > expected) Fail(ErrorCode::kFormat, "trailing bytes after payload");

  std::vector<PassageId> ids(n);
  in.read(reinterpret_cast<char*>(ids.data()), static_cast<std::streamsize>(n * 8ULL));
  std::vector<Half> values(cells);
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(cells * 2));
  if (!in) Fail(ErrorCode::kTruncated, "short read from " + path.string());
  return EmbeddingMatrix::FromHalves(d, std::move(ids), std::move(values));
}

std::vector<RetrievalResult> Search(const EmbeddingMatrix& index,
                                    std::span<const float> query, size_t k,
                                    unsigned threads) {
  if (query.size() != index.dim()) {
    Fail(ErrorCode::kDimensionMismatch,
         "query has " + std::to_string(query.size()) + " dims, index has " +
             std::to_string(index.dim()));
  }
  const size_t n = index.rows();
  if (k > n) {
    Fail(ErrorCode::kInvalidArgument,
         "k=" + std::to_string(k) + " exceeds index size " + std::to_string(n));
  }
  if (k == 0) return {};

  const auto& table = WideningTable();
  const uint32_t d = index.dim();
  std::vector<float> scores(n);
  auto score_range = [&](size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i) {
      const auto row = index.row(i);
      float acc = 0.0f;
      for (uint32_t j = 0; j < d; ++j) acc += table[row[j].bits] * query[j];
      scores[i] = acc;
    }
  };

  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads == 1) {
    score_range(0, n);
  } else {
    std::vector<std::jthread> workers;
    const size_t chunk = (n + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const size_t begin = t * chunk;
      const size_t end = std::min(n, begin + chunk);
      if (begin < end) workers.emplace_back(score_range, begin, end);
    }
  }

  const auto& ids = index.row_ids();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  auto better = [&](size_t a, size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<ptrdiff_t>(k),
                    order.end(), better);
  std::vector<RetrievalResult> out;
  out.reserve(k);
  for (size_t i = 0; i < k; ++i) out.push_back({ids[order[i]], scores[order[i]]});
  return out;
}

EmbeddingMatrix SubsetIndex(const EmbeddingMatrix& index,
                            std::span<const PassageId> keep_ids) {
  std::unordered_map<PassageId, size_t> position;
  position.reserve(index.rows());
  for (size_t i = 0; i < index.rows(); ++i) position.emplace(index.row_ids()[i], i);
  std::vector<char> keep(index.rows(), 0);
  for (PassageId id : keep_ids) {
    auto it = position.find(id);
    if (it == position.end()) {
      Fail(ErrorCode::kLookup, "id " + std::to_string(id) + " is not in the index");
    }
    keep[it->second] = 1;
  }
  std::vector<PassageId> ids;
  std::vector<Half> values;
  for (size_t i = 0; i < index.rows(); ++i) {
    if (!keep[i]) continue;
    ids.push_back(index.row_ids()[i]);
    const auto r = index.row(i);
    values.insert(values.end(), r.begin(), r.end());
  }
  return EmbeddingMatrix::FromHalves(index.dim(), std::move(ids), std::move(values));
}

}  // namespace r2d2
