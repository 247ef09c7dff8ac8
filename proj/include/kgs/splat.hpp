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

// Velocity-driven anisotropic Gaussian splatting of skeleton sequences into
// multi-view heatmaps.
//
// Each joint becomes a 2-D Gaussian per view and frame. Its covariance is
// R diag(s_x^2, s_y^2) R^T with R aligned to the projected velocity and
// s_x = s_base (1 + alpha tanh|v|), s_y = s_base, s_base = exp(log_scale).
// Because every covariance is s_base^2 times a log_scale-free matrix, a
// pixel response G = exp(-q/2) has dG/dlog_scale = G * q, where q is the
// squared Mahalanobis distance.

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "kgs/autograd.hpp"
#include "kgs/skeleton.hpp"

namespace kgs {

enum class Axis { X = 0, Y = 1, Z = 2 };
enum class Aggregation { Max, ClampedSum };

struct View {
  Axis first;
  Axis second;
  std::string name() const;  // e.g. "XY"
};

/// Parses "XY", "YZ", "zx" ... into a view.
View parse_view(std::string_view name);
std::vector<View> default_views(std::size_t channels);
Aggregation parse_aggregation(std::string_view name);
std::string to_string(Aggregation agg);

struct RenderConfig {
  std::size_t height = 32;
  std::size_t width = 32;
  double alpha = 2.0;
  double log_scale = -2.0;
  double truncation_sigmas = 3.0;
  Aggregation aggregation = Aggregation::Max;
  std::vector<View> views;  // empty: default_views(C)
  bool isotropic = false;   // force v = 0 in covariance construction

  void validate() const;
  std::vector<View> views_for(std::size_t channels) const;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

/// Symmetric 2x2 matrix [[xx, xy], [xy, yy]].
struct Cov2 {
  double xx = 0.0;
  double xy = 0.0;
  double yy = 0.0;

  double det() const { return xx * yy - xy * xy; }
  double trace() const { return xx + yy; }
  Cov2 inverse() const;
  /// dᵀ M d.
  double quad(Vec2 d) const { return xx * d.x * d.x + 2.0 * xy * d.x * d.y + yy * d.y * d.y; }
  bool positive_definite() const { return xx > 0.0 && det() > 0.0; }
};

struct GaussianPrimitive2D {
  Vec2 mu;
  Cov2 sigma;
  double theta = 0.0;
  double scale_x = 0.0;
  double scale_y = 0.0;
};

/// T x V primitives of one view, row-major over (t, v).
struct PrimitiveGrid {
  View view;
  std::size_t frames = 0;
  std::size_t joints = 0;
  std::vector<GaussianPrimitive2D> primitives;

  const GaussianPrimitive2D& at(std::size_t t, std::size_t v) const {
    return primitives[t * joints + v];
  }
};

/// views x T x H x W responses. d_log_scale, when filled, holds the
/// derivative of every value with respect to the render log-scale.
struct HeatmapStack {
  std::size_t views = 0;
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;
  std::vector<double> d_log_scale;
  std::string source;
  RenderConfig config;

  std::size_t index(std::size_t view, std::size_t t, std::size_t y, std::size_t x) const {
    return ((view * frames + t) * height + y) * width + x;
  }
  std::span<const double> frame(std::size_t view, std::size_t t) const {
    return {values.data() + index(view, t, 0, 0), height * width};
  }
};

struct ProjectedView {
  std::vector<double> positions;   // T x V x 2
  std::vector<double> velocities;  // T x V x 2
};

ProjectedView project_to_view(const KinematicSequence& kin, View view);

/// Covariance for one joint with velocity `velocity`; mu is left at zero.
GaussianPrimitive2D build_covariance(Vec2 velocity, const RenderConfig& config);

/// exp(-(p - mu)ᵀ Σ⁻¹ (p - mu) / 2).
double evaluate_gaussian(const GaussianPrimitive2D& prim, Vec2 p);

/// Normalised coordinate of a pixel centre along an axis of `extent` pixels.
inline double pixel_center(std::size_t index, std::size_t extent) {
  return -1.0 + 2.0 * (static_cast<double>(index) + 0.5) / static_cast<double>(extent);
}

/// Rasterises one frame into `out` (H*W, row y major). When `d_log_scale`
/// is non-empty it receives the derivative of each pixel w.r.t. log_scale.
/// Means outside [-1, 1] are clamped to the boundary with a warning.
void render_frame(std::span<const GaussianPrimitive2D> prims, const RenderConfig& config,
                  std::span<double> out, std::span<double> d_log_scale = {});

struct RenderResult {
  HeatmapStack heatmaps;
  std::vector<PrimitiveGrid> grids;  // one per view
};

RenderResult render_sequence(const KinematicSequence& kin, const RenderConfig& config,
                             bool with_gradient = false);

/// Primitives only, without rasterising.
std::vector<PrimitiveGrid> build_primitive_grids(const KinematicSequence& kin,
                                                 const RenderConfig& config);

/// Differentiable rendering of a batch of equally shaped sequences into a
/// [N*T, views, H, W] tensor (frame-major per sample) whose only gradient
/// path is the scalar `log_scale` [1]. config.log_scale is ignored in
/// favour of the tensor value.
ad::Var render_batch(const ad::Var& log_scale, std::span<const KinematicSequence* const> batch,
                     const RenderConfig& config);

}  // namespace kgs
