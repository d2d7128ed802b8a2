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

#include "r2d2/fp16.h"

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.h"

namespace r2d2 {
namespace {

// Value of a binary16 pattern straight from the bit layout, in double.
double DecodeBits(uint16_t bits) {
  const double sign = (bits & 0x8000) ? -1.0 : 1.0;
  const int e = (bits >> 10) & 0x1F;
  const int m = bits & 0x3FF;
  if (e == 0) return sign * m * std::pow(2.0, -24);
  if (e == 31) return m == 0 ? sign * INFINITY : NAN;
  return sign * (1024 + m) * std::pow(2.0, e - 25);
}

// Nearest finite half by search over the sorted table of non-negative
// patterns, ties to the even pattern. Overflow at 65520 (half an ulp past
// the largest finite value).
uint16_t OracleToHalf(double x) {
  static const std::vector<double> table = [] {
    std::vector<double> t;
    for (uint32_t b = 0; b < 0x7C00; ++b) t.push_back(DecodeBits(static_cast<uint16_t>(b)));
    return t;
  }();
  const uint16_t sign = std::signbit(x) ? 0x8000 : 0;
  const double mag = std::fabs(x);
  if (mag >= 65520.0) return sign | 0x7C00;
  auto it = std::lower_bound(table.begin(), table.end(), mag);
  if (it == table.end()) return sign | 0x7BFF;
  size_t hi = static_cast<size_t>(it - table.begin());
  if (table[hi] == mag || hi == 0) return static_cast<uint16_t>(sign | hi);
  const size_t lo = hi - 1;
  const double dlo = mag - table[lo];
  const double dhi = table[hi] - mag;
  size_t pick = dlo < dhi ? lo : (dhi < dlo ? hi : (lo % 2 == 0 ? lo : hi));
  return static_cast<uint16_t>(sign | pick);
}

TEST(Fp16Test, WideningMatchesBitLayoutForAllPatterns) {
  for (uint32_t b = 0; b <= 0xFFFF; ++b) {
    const Half h{static_cast<uint16_t>(b)};
    const double expect = DecodeBits(h.bits);
    const float got = FromHalf(h);
    if (std::isnan(expect)) {
      EXPECT_TRUE(std::isnan(got)) << b;
      EXPECT_FALSE(IsFinite(h));
    } else {
      EXPECT_EQ(static_cast<double>(got), expect) << b;
      EXPECT_EQ(IsFinite(h), std::isfinite(expect)) << b;
    }
  }
}

TEST(Fp16Test, RoundTripsEveryNonNanPattern) {
  for (uint32_t b = 0; b <= 0xFFFF; ++b) {
    const Half h{static_cast<uint16_t>(b)};
    if (std::isnan(FromHalf(h))) continue;
    EXPECT_EQ(ToHalf(FromHalf(h)).bits, h.bits) << b;
  }
}

TEST(Fp16Test, MidpointsRoundToEven) {
  // Exact midpoints between consecutive finite halves.
  for (uint32_t b = 0; b < 0x7BFF; ++b) {
    const double mid = 0.5 * (DecodeBits(static_cast<uint16_t>(b)) +
                              DecodeBits(static_cast<uint16_t>(b + 1)));
    const uint16_t even = (b % 2 == 0) ? b : b + 1;
    ASSERT_EQ(ToHalf(mid).bits, even) << b;
    ASSERT_EQ(ToHalf(-mid).bits, even | 0x8000) << b;
  }
}

TEST(Fp16Test, RandomDoublesMatchNearestSearch) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> exponent(-26.0, 17.0);
  std::uniform_real_distribution<double> unit(0.5, 1.0);
  for (int i = 0; i < 200000; ++i) {
    double x = unit(rng) * std::pow(2.0, exponent(rng));
    if (rng() & 1) x = -x;
    ASSERT_EQ(ToHalf(x).bits, OracleToHalf(x)) << x;
  }
}

TEST(Fp16Test, KnownValues) {
  EXPECT_EQ(FromHalf(ToHalf(1.0)), 1.0f);
  EXPECT_EQ(static_cast<double>(FromHalf(ToHalf(0.1))), 0.0999755859375);
  EXPECT_EQ(ToHalf(65504.0).bits, 0x7BFF);
  EXPECT_EQ(ToHalf(65519.99).bits, 0x7BFF);
  EXPECT_EQ(ToHalf(65520.0).bits, 0x7C00);
  EXPECT_EQ(ToHalf(70000.0).bits, 0x7C00);
  EXPECT_EQ(ToHalf(-70000.0).bits, 0xFC00);
  EXPECT_EQ(ToHalf(-0.0).bits, 0x8000);
  EXPECT_EQ(ToHalf(std::pow(2.0, -24)).bits, 0x0001);
  EXPECT_EQ(ToHalf(std::pow(2.0, -25)).bits, 0x0000);  // tie to even zero
  EXPECT_EQ(ToHalf(1.5 * std::pow(2.0, -25)).bits, 0x0001);
}

TEST(Fp16Test, NanRejected) {
  EXPECT_CODE(ErrorCode::kInvalidArgument, ToHalf(std::numeric_limits<double>::quiet_NaN()));
}

}  // namespace
}  // namespace r2d2
