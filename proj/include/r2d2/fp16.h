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

#ifndef R2D2_FP16_H_
#define R2D2_FP16_H_

#include <cstdint>

namespace r2d2 {

// IEEE-754 binary16 storage value. Arithmetic happens after widening.
struct Half {
  uint16_t bits = 0;

  friend bool operator==(Half a, Half b) { return a.bits == b.bits; }
};

inline constexpr double kHalfMax = 65504.0;

// Round-to-nearest-even conversion. Values beyond the binary16 range map to
// +/-infinity; NaN input throws kInvalidArgument.
Half ToHalf(double x);

float FromHalf(Half h);

bool IsFinite(Half h);

}  // namespace r2d2

#endif  // R2D2_FP16_H_
