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

#include "r2d2/trainer.h"

#include <cmath>

#include "r2d2/errors.h"

namespace r2d2 {

TrainResult MinimizeGradientDescent(const Objective& objective,
                                    std::vector<double> init,
                                    const TrainOptions& options) {
  if (options.epochs < 0 || !(options.lr > 0.0)) {
    Fail(ErrorCode::kInvalidArgument, "epochs must be >= 0 and lr > 0");
  }
  TrainResult result;
  result.params = std::move(init);
  std::vector<double> grad(result.params.size(), 0.0);
  std::vector<double> trial(result.params.size(), 0.0);
  std::vector<double> trial_grad(result.params.size(), 0.0);

  double lr = options.lr;
  double loss = objective(result.params, grad);
  if (!std::isfinite(loss)) Fail(ErrorCode::kDivergence, "initial loss is not finite");

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    for (size_t i = 0; i < trial.size(); ++i) {
      trial[i] = result.params[i] - lr * grad[i];
    }
    const double trial_loss = objective(trial, trial_grad);
    if (!std::isfinite(trial_loss)) {
      if (!options.halve_on_increase) {
        Fail(ErrorCode::kDivergence,
             "loss became non-finite at epoch " + std::to_string(epoch));
      }
      lr *= 0.5;
      continue;
    }
    if (options.halve_on_increase && trial_loss > loss) {
      lr *= 0.5;
      continue;
    }
    result.params.swap(trial);
    grad.swap(trial_grad);
    loss = trial_loss;
    ++result.epochs_run;
  }
  result.final_loss = loss;
  result.final_lr = lr;
  return result;
}

}  // namespace r2d2
