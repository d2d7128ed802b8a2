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

#include "r2d2/errors.h"

namespace r2d2 {

Half ToHalf(double x) {
  if (std::isnan(x)) Fail(ErrorCode::kInvalidArgument, "NaN cannot be stored");
  const uint16_t sign = std::signbit(x) ? 0x8000 : 0;
  const double mag = std::fabs(x);
  if (mag == 0.0) return Half{sign};
  if (std::isinf(mag)) return Half{static_cast<uint16_t>(sign | 0x7C00)};

  int exp2 = 0;
  const double frac = std::frexp(mag, &exp2);  // mag = frac * 2^exp2
  int exponent = exp2 - 1;                      // mag in [2^e, 2^(e+1))

  if (exponent < -14) {
    // Subnormal range: units of 2^-24, exact scaling then nearest-even.
    const double units = std::nearbyint(std::ldexp(mag, 24));
    // units == 1024 rolls over into the smallest normal, which the bit
    // layout encodes naturally.
    return Half{static_cast<uint16_t>(sign | static_cast<uint16_t>(units))};
  }

  double mantissa = std::nearbyint(std::ldexp(frac, 11));  // [1024, 2048]
  if (mantissa == 2048.0) {
    mantissa = 1024.0;
    ++exponent;
  }
  if (exponent > 15) return Half{static_cast<uint16_t>(sign | 0x7C00)};
  const auto biased = static_cast<uint16_t>(exponent + 15);
  const auto low = static_cast<uint16_t>(static_cast<int>(mantissa) - 1024);
  return Half{static_cast<uint16_t>(sign | (biased << 10) | low)};
}

float FromHalf(Half h) {
  const bool negative = (h.bits & 0x8000) != 0;
  const int biased = (h.bits >> 10) & 0x1F;
  const int low = h.bits & 0x3FF;
  float value;
  if (biased == 0) {
    value = std::ldexp(static_cast<float>(low), -24);
  } else if (biased == 31) {
    value = low == 0 ? INFINITY : NAN;
  } else {
    value = std::ldexp(static_cast<float>(1024 + low), biased - 25);
  }
  return negative ? -value : value;
}

bool IsFinite(Half h) { return ((h.bits >> 10) & 0x1F) != 31; }

}  // namespace r2d2
