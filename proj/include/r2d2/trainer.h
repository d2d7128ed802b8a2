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

#ifndef R2D2_TRAINER_H_
#define R2D2_TRAINER_H_

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace r2d2 {

struct TrainOptions {
  uint64_t seed = 0;
  int epochs = 500;
  double lr = 0.1;
  // Reject a step that increases the loss and retry with half the rate.
  bool halve_on_increase = true;
};

// Returns the loss at `params` and writes its gradient into `grad`.
using Objective =
    std::function<double(std::span<const double> params, std::span<double> grad)>;

struct TrainResult {
  std::vector<double> params;
  double final_loss = 0.0;
  double final_lr = 0.0;
  int epochs_run = 0;
};

// Full-batch gradient descent in fp64 from `init`. Deterministic: the same
// objective, init and options give bitwise-identical parameters. Throws
// kDivergence when the loss becomes non-finite.
TrainResult MinimizeGradientDescent(const Objective& objective,
                                    std::vector<double> init,
                                    const TrainOptions& options);

}  // namespace r2d2

#endif  // R2D2_TRAINER_H_
