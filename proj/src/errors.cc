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

#include "r2d2/errors.h"

namespace r2d2 {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kDuplicateKey: return "duplicate-key";
    case ErrorCode::kLookup: return "lookup";
    case ErrorCode::kCapacity: return "capacity";
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kDimensionMismatch: return "dimension-mismatch";
    case ErrorCode::kOverflow: return "overflow";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kShouldHaveBeenFiltered: return "should-have-been-filtered";
    case ErrorCode::kInvalidAnnotation: return "invalid-annotation";
    case ErrorCode::kMissingScore: return "missing-score";
    case ErrorCode::kStage: return "stage";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(message), code_(code) {}

void Fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace r2d2
