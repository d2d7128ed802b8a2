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
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "r2d2/fp16.h"
#include "r2d2/jsonl.h"
#include "test_util.h"

namespace r2d2 {
namespace {

EmbeddingMatrix RandomIndex(size_t n, uint32_t d, uint64_t seed, bool shuffle_ids = true) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::vector<float> values(n * d);
  for (float& v : values) v = g(rng);
  std::vector<PassageId> ids(n);
  std::iota(ids.begin(), ids.end(), PassageId{100});
  if (shuffle_ids) std::shuffle(ids.begin(), ids.end(), rng);
  return EmbeddingMatrix::FromFloats(d, ids, values);
}

// Full ranking by fp32 dot products over the widened rows.
std::vector<RetrievalResult> BruteForce(const EmbeddingMatrix& m, std::span<const float> q) {
  std::vector<RetrievalResult> all;
  for (size_t i = 0; i < m.rows(); ++i) {
    float acc = 0.0f;
    for (uint32_t j = 0; j < m.dim(); ++j) acc += FromHalf(m.row(i)[j]) * q[j];
    all.push_back({m.row_ids()[i], acc});
  }
  std::sort(all.begin(), all.end(), [](const RetrievalResult& a, const RetrievalResult& b) {
    return a.score != b.score ? a.score > b.score : a.passage_id < b.passage_id;
  });
  return all;
}

std::vector<float> RandomQuery(uint32_t d, std::mt19937_64& rng) {
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::vector<float> q(d);
  for (float& v : q) v = g(rng);
  return q;
}

TEST(EmbeddingMatrixTest, ValidatesOnBuild) {
  EXPECT_CODE(ErrorCode::kOverflow, EmbeddingMatrix::FromFloats(1, {0}, std::vector<float>{70000.0f}));
  EXPECT_CODE(ErrorCode::kInvalidArgument,
              EmbeddingMatrix::FromFloats(1, {0}, std::vector<float>{NAN}));
  EXPECT_CODE(ErrorCode::kDuplicateKey,
              EmbeddingMatrix::FromFloats(1, {3, 3}, std::vector<float>{1.0f, 2.0f}));
  EXPECT_CODE(ErrorCode::kDimensionMismatch,
              EmbeddingMatrix::FromFloats(2, {0}, std::vector<float>{1.0f}));
}

TEST(IndexFileTest, RoundTripIsBitExact) {
  testing::TempDir dir;
  const EmbeddingMatrix m =
      EmbeddingMatrix::FromFloats(3, {7, 2}, std::vector<float>{0.1f, -2.5f, 3.0f, 1e-6f, 0.0f, 65504.0f});
  WriteIndex(m, dir / "m.emb");
  EXPECT_EQ(ReadIndex(dir / "m.emb"), m);
  const std::string bytes = ReadFileBytes(dir / "m.emb");
  EXPECT_EQ(bytes.size(), 8u + 4 + 4 + 2 * 8 + 6 * 2);
  EXPECT_EQ(bytes.substr(0, 8), "R2D2EMB1");
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 2u);   // n, little-endian
  EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 3u);  // d
  EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 7u);  // first id

  const EmbeddingMatrix big = RandomIndex(50, 16, 3);
  WriteIndex(big, dir / "big.emb");
  EXPECT_EQ(ReadIndex(dir / "big.emb"), big);
}

TEST(IndexFileTest, CorruptFilesRejected) {
  testing::TempDir dir;
  const EmbeddingMatrix m = RandomIndex(4, 2, 1);
  WriteIndex(m, dir / "ok.emb");
  const std::string bytes = ReadFileBytes(dir / "ok.emb");
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream(dir / name, std::ios::binary) << content;
    return dir / name;
  };
  EXPECT_CODE(ErrorCode::kTruncated, ReadIndex(write("cut.emb", bytes.substr(0, bytes.size() - 1))));
  EXPECT_CODE(ErrorCode::kTruncated, ReadIndex(write("tiny.emb", "R2D2")));
  std::string magic = bytes;
  magic[7] = '2';
  EXPECT_CODE(ErrorCode::kFormat, ReadIndex(write("magic.emb", magic)));
  std::string huge = bytes;
  huge[8] = huge[9] = huge[10] = huge[11] = '\xFF';  // n = 2^32 - 1
  EXPECT_CODE(ErrorCode::kTruncated, ReadIndex(write("huge.emb", huge)));
  EXPECT_CODE(ErrorCode::kFormat, ReadIndex(write("trail.emb", bytes + "x")));
  EXPECT_CODE(ErrorCode::kIo, ReadIndex(dir / "missing.emb"));
}

TEST(SearchTest, SmallCaseMatchesOracle) {
  const EmbeddingMatrix m = RandomIndex(4, 2, 11);
  std::mt19937_64 rng(5);
  const auto q = RandomQuery(2, rng);
  const auto full = BruteForce(m, q);
  EXPECT_EQ(Search(m, q, 4), full);
  // K = n is a permutation of the row ids.
  std::vector<PassageId> ids;
  for (const auto& r : full) ids.push_back(r.passage_id);
  std::vector<PassageId> rows = m.row_ids();
  std::sort(ids.begin(), ids.end());
  std::sort(rows.begin(), rows.end());
  EXPECT_EQ(ids, rows);
}

TEST(SearchTest, UnitRowQueryRanksItselfFirst) {
  // Distinct unit vectors on a circle, exactly representable.
  std::vector<float> values;
  std::vector<PassageId> ids;
  for (int i = 0; i < 8; ++i) {
    const double a = i * M_PI / 4;
    values.push_back(FromHalf(ToHalf(std::cos(a))));
    values.push_back(FromHalf(ToHalf(std::sin(a))));
    ids.push_back(i);
  }
  const auto m = EmbeddingMatrix::FromFloats(2, ids, values);
  for (size_t i = 0; i < 8; ++i) {
    const auto row = m.RowAsFloat(i);
    EXPECT_EQ(Search(m, row, 1)[0].passage_id, ids[i]);
  }
}

TEST(SearchTest, TiesBreakByAscendingId) {
  const auto m = EmbeddingMatrix::FromFloats(1, {9, 4, 6}, std::vector<float>{1.0f, 1.0f, 1.0f});
  const auto r = Search(m, std::vector<float>{2.0f}, 3);
  EXPECT_EQ(r[0].passage_id, 4u);
  EXPECT_EQ(r[1].passage_id, 6u);
  EXPECT_EQ(r[2].passage_id, 9u);
}

TEST(SearchTest, ErrorsAndEmptyIndex) {
  const EmbeddingMatrix m = RandomIndex(5, 3, 2);
  EXPECT_CODE(ErrorCode::kDimensionMismatch, Search(m, std::vector<float>{1, 2}, 1));
  EXPECT_CODE(ErrorCode::kInvalidArgument, Search(m, std::vector<float>{1, 2, 3}, 6));
  const EmbeddingMatrix empty = SubsetIndex(m, {});
  EXPECT_EQ(empty.rows(), 0u);
  EXPECT_TRUE(Search(empty, std::vector<float>{1, 2, 3}, 0).empty());
  EXPECT_CODE(ErrorCode::kInvalidArgument, Search(empty, std::vector<float>{1, 2, 3}, 1));
}

TEST(SearchTest, ThreadedEqualsSingleThreaded) {
  const EmbeddingMatrix m = RandomIndex(1000, 32, 8);
  std::mt19937_64 rng(9);
  for (int t = 0; t < 5; ++t) {
    const auto q = RandomQuery(32, rng);
    EXPECT_EQ(Search(m, q, 50, 1), Search(m, q, 50, 4));
  }
}

TEST(SearchTest, PrefixPropertyAndSubsetRestriction) {
  const EmbeddingMatrix m = RandomIndex(60, 8, 4);
  std::mt19937_64 rng(10);
  const auto q = RandomQuery(8, rng);
  const auto full = Search(m, q, m.rows());
  for (size_t k = 0; k < m.rows(); ++k) {
    const auto top = Search(m, q, k);
    ASSERT_TRUE(std::equal(top.begin(), top.end(), full.begin())) << k;
  }
  std::vector<PassageId> keep;
  for (size_t i = 0; i < m.rows(); i += 3) keep.push_back(m.row_ids()[i]);
  const EmbeddingMatrix sub = SubsetIndex(m, keep);
  EXPECT_EQ(sub.rows(), keep.size());
  std::vector<RetrievalResult> filtered;
  for (const auto& r : full) {
    if (std::find(keep.begin(), keep.end(), r.passage_id) != keep.end()) filtered.push_back(r);
  }
  filtered.resize(7);
  EXPECT_EQ(Search(sub, q, 7), filtered);
  EXPECT_EQ(SubsetIndex(m, m.row_ids()), m);
  EXPECT_CODE(ErrorCode::kLookup, SubsetIndex(m, std::vector<PassageId>{1}));
}

TEST(SearchTest, WidenedScoresCloseToFp64OnUnitData) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g(0.0, 1.0);
  const uint32_t d = 64;
  std::vector<float> values;
  std::vector<PassageId> ids;
  for (PassageId i = 0; i < 200; ++i) {
    std::vector<double> v(d);
    double norm = 0;
    for (double& x : v) norm += (x = g(rng)) * x;
    for (double x : v) values.push_back(static_cast<float>(x / std::sqrt(norm)));
    ids.push_back(i);
  }
  const auto m = EmbeddingMatrix::FromFloats(d, ids, values);
  const auto q = m.RowAsFloat(0);
  for (const auto& r : Search(m, q, 200)) {
    const auto row = m.RowAsFloat(static_cast<size_t>(r.passage_id));
    double exact = 0;
    for (uint32_t j = 0; j < d; ++j) exact += static_cast<double>(row[j]) * q[j];
    EXPECT_LT(std::fabs(r.score - exact), 1e-3 * std::max(1.0, std::fabs(exact)));
  }
}

}  // namespace
}  // namespace r2d2
