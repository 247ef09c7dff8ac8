// Copyright 2026 The KGS-GCN Authors
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

#pragma once

#include <span>

#include "kgs/autograd.hpp"

namespace kgs::ad {

struct SgdOptions {
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 4e-4;
  bool nesterov = true;
};

/// One SGD step over every non-frozen parameter:
///   g = grad + weight_decay * w
///   buf = momentum * buf + g
///   w -= lr * (nesterov ? g + momentum * buf : buf)
/// Non-positive learning rates throw ConfigError; callers skip the step
/// instead (the warm-up schedule starts at 0).
void sgd_step(std::span<Parameter* const> params, const SgdOptions& options);

}  // namespace kgs::ad
