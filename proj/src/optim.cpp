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

#include "kgs/optim.hpp"

#include <cmath>

#include "kgs/errors.hpp"

namespace kgs::ad {

void sgd_step(std::span<Parameter* const> params, const SgdOptions& options) {
  if (!(options.lr > 0.0) || !std::isfinite(options.lr)) {
    throw ConfigError("sgd: learning rate must be finite and positive");
  }
  if (options.momentum < 0.0 || options.weight_decay < 0.0) {
    throw ConfigError("sgd: momentum and weight decay must be non-negative");
  }
  for (Parameter* p : params) {
    if (p->frozen) continue;
    auto w = p->value.values();
    auto g = p->gradient.values();
    auto buf = p->momentum.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double d = g[i] + options.weight_decay * w[i];
      buf[i] = options.momentum * buf[i] + d;
      const double step = options.nesterov ? d + options.momentum * buf[i] : buf[i];
      w[i] -= options.lr * step;
    }
  }
}

}  // namespace kgs::ad
