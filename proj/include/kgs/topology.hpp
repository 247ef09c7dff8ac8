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

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "kgs/splat.hpp"

namespace kgs {

/// Bhattacharyya distance between N(mu_i, sigma_i) and N(mu_j, sigma_j):
///   1/8 dᵀ Σ_avg⁻¹ d + 1/2 ln(det Σ_avg / sqrt(det Σ_i det Σ_j)),
/// Σ_avg = (Σ_i + Σ_j) / 2. Throws MatrixError for non-SPD inputs.
double bhattacharyya_distance(Vec2 mu_i, const Cov2& sigma_i, Vec2 mu_j, const Cov2& sigma_j);

/// Sample-adaptive V x V affinity, exp(-D_B) averaged over frames and views.
struct PriorAdjacency {
  std::size_t joints = 0;
  std::size_t frames = 0;
  std::size_t views = 0;
  std::vector<double> matrix;  // row-major V x V
  std::string source;

  double at(std::size_t i, std::size_t j) const { return matrix[i * joints + j]; }
};

PriorAdjacency build_prior_adjacency(std::span<const PrimitiveGrid> grids);

}  // namespace kgs
