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

#include "kgs/topology.hpp"

#include <algorithm>
#include <cmath>

#include "kgs/errors.hpp"

namespace kgs {

double bhattacharyya_distance(Vec2 mu_i, const Cov2& sigma_i, Vec2 mu_j, const Cov2& sigma_j) {
  if (!sigma_i.positive_definite() || !sigma_j.positive_definite()) {
    throw MatrixError("bhattacharyya: covariance is not positive definite");
  }
  const Cov2 avg{(sigma_i.xx + sigma_j.xx) / 2.0, (sigma_i.xy + sigma_j.xy) / 2.0,
                 (sigma_i.yy + sigma_j.yy) / 2.0};
  const Vec2 d{mu_i.x - mu_j.x, mu_i.y - mu_j.y};
  const double mahalanobis = avg.inverse().quad(d) / 8.0;
  const double shape =
      0.5 * std::log(avg.det() / std::sqrt(sigma_i.det() * sigma_j.det()));
  // The log-det term is >= 0 in exact arithmetic; drop round-off below zero.
  return mahalanobis + std::max(shape, 0.0);
}

PriorAdjacency build_prior_adjacency(std::span<const PrimitiveGrid> grids) {
  if (grids.empty() || grids.front().frames == 0) {
    throw DimensionError("prior adjacency: need at least one view and one frame");
  }
  const std::size_t nv = grids.front().joints, nt = grids.front().frames;
  for (const PrimitiveGrid& g : grids) {
    if (g.joints != nv || g.frames != nt || g.primitives.size() != nv * nt) {
      throw DimensionError("prior adjacency: primitive grids disagree in shape");
    }
  }
  PriorAdjacency prior;
  prior.joints = nv;
  prior.frames = nt;
  prior.views = grids.size();
  prior.matrix.assign(nv * nv, 0.0);
  for (const PrimitiveGrid& g : grids)
    for (std::size_t t = 0; t < nt; ++t)
      for (std::size_t i = 0; i < nv; ++i)
        for (std::size_t j = i + 1; j < nv; ++j) {
          const GaussianPrimitive2D& a = g.at(t, i);
          const GaussianPrimitive2D& b = g.at(t, j);
          prior.matrix[i * nv + j] += std::exp(-bhattacharyya_distance(a.mu, a.sigma, b.mu, b.sigma));
        }
  const double count = static_cast<double>(nt * grids.size());
  for (std::size_t i = 0; i < nv; ++i) {
    prior.matrix[i * nv + i] = 1.0;
    for (std::size_t j = i + 1; j < nv; ++j) {
      const double a = prior.matrix[i * nv + j] / count;
      prior.matrix[i * nv + j] = a;
      prior.matrix[j * nv + i] = a;
    }
  }
  return prior;
}

}  // namespace kgs
