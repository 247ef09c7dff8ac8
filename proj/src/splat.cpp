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

#include "kgs/splat.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iostream>

#include "kgs/errors.hpp"

namespace kgs {

namespace {

constexpr double kMinSpeed = 1e-9;

char axis_char(Axis a) { return "XYZ"[static_cast<int>(a)]; }

Axis parse_axis(char c) {
  switch (std::toupper(static_cast<unsigned char>(c))) {
    case 'X': return Axis::X;
    case 'Y': return Axis::Y;
    case 'Z': return Axis::Z;
    default: throw ConfigError(std::string("unknown axis '") + c + "'");
  }
}

}  // namespace

std::string View::name() const { return {axis_char(first), axis_char(second)}; }

View parse_view(std::string_view name) {
  if (name.size() != 2) throw ConfigError("view must name two axes, got '" + std::string(name) + "'");
  View v{parse_axis(name[0]), parse_axis(name[1])};
  if (v.first == v.second) throw ConfigError("view axes must differ: '" + std::string(name) + "'");
  return v;
}

std::vector<View> default_views(std::size_t channels) {
  if (channels == 2) return {{Axis::X, Axis::Y}};
  return {{Axis::X, Axis::Y}, {Axis::Y, Axis::Z}, {Axis::Z, Axis::X}};
}

Aggregation parse_aggregation(std::string_view name) {
  if (name == "max") return Aggregation::Max;
  if (name == "sum" || name == "clamped_sum") return Aggregation::ClampedSum;
  throw ConfigError("unknown aggregation '" + std::string(name) + "' (expected max|sum)");
}

std::string to_string(Aggregation agg) {
  return agg == Aggregation::Max ? "max" : "clamped_sum";
}

void RenderConfig::validate() const {
  if (height < 2 || width < 2) throw ConfigError("render: resolution must be at least 2x2");
  if (!(alpha >= 0.0)) throw ConfigError("render: alpha must be >= 0");
  if (!(truncation_sigmas > 0.0)) throw ConfigError("render: truncation_sigmas must be > 0");
  if (!std::isfinite(log_scale)) throw ConfigError("render: log_scale must be finite");
}

std::vector<View> RenderConfig::views_for(std::size_t channels) const {
  return views.empty() ? default_views(channels) : views;
}

Cov2 Cov2::inverse() const {
  const double d = det();
  if (!(d > 0.0)) throw MatrixError("covariance is not positive definite");
  return {yy / d, -xy / d, xx / d};
}

ProjectedView project_to_view(const KinematicSequence& kin, View view) {
  const auto a = static_cast<std::size_t>(view.first);
  const auto b = static_cast<std::size_t>(view.second);
  if (a == b) throw DimensionError("view " + view.name() + " repeats an axis");
  if (a >= kin.channels || b >= kin.channels) {
    throw DimensionError("view " + view.name() + " needs axis beyond C = " +
                         std::to_string(kin.channels));
  }
  ProjectedView out;
  const std::size_t count = kin.frames * kin.joints;
  out.positions.resize(2 * count);
  out.velocities.resize(2 * count);
  for (std::size_t k = 0; k < count; ++k) {
    out.positions[2 * k] = kin.positions[k * kin.channels + a];
    out.positions[2 * k + 1] = kin.positions[k * kin.channels + b];
    out.velocities[2 * k] = kin.velocities[k * kin.channels + a];
    out.velocities[2 * k + 1] = kin.velocities[k * kin.channels + b];
  }
  return out;
}

GaussianPrimitive2D build_covariance(Vec2 velocity, const RenderConfig& config) {
  const double s_base = std::exp(config.log_scale);
  const double speed = config.isotropic ? 0.0 : std::hypot(velocity.x, velocity.y);
  GaussianPrimitive2D prim;
  prim.scale_x = s_base * (1.0 + config.alpha * std::tanh(speed));
  prim.scale_y = s_base;
  prim.theta = speed >= kMinSpeed ? std::atan2(velocity.y, velocity.x) : 0.0;
  const double c = std::cos(prim.theta), s = std::sin(prim.theta);
  const double sx2 = prim.scale_x * prim.scale_x, sy2 = prim.scale_y * prim.scale_y;
  prim.sigma.xx = sx2 * c * c + sy2 * s * s;
  prim.sigma.yy = sx2 * s * s + sy2 * c * c;
  prim.sigma.xy = (sx2 - sy2) * s * c;
  return prim;
}

double evaluate_gaussian(const GaussianPrimitive2D& prim, Vec2 p) {
  const Vec2 d{p.x - prim.mu.x, p.y - prim.mu.y};
  return std::exp(-0.5 * prim.sigma.inverse().quad(d));
}

void render_frame(std::span<const GaussianPrimitive2D> prims, const RenderConfig& config,
                  std::span<double> out, std::span<double> d_log_scale) {
  const std::size_t h = config.height, w = config.width;
  if (out.size() != h * w) throw DimensionError("render_frame: output buffer size mismatch");
  const bool grad = !d_log_scale.empty();
  if (grad && d_log_scale.size() != h * w) {
    throw DimensionError("render_frame: gradient buffer size mismatch");
  }
  std::fill(out.begin(), out.end(), 0.0);
  if (grad) std::fill(d_log_scale.begin(), d_log_scale.end(), 0.0);
  const bool use_max = config.aggregation == Aggregation::Max;
  ad::BranchTrace* trace = ad::BranchTrace::current();

  // Inclusive pixel index range whose centres fall in [lo, hi].
  auto pixel_range = [](double lo, double hi, std::size_t extent) {
    const double n = static_cast<double>(extent);
    const double first = std::ceil((lo + 1.0) * n / 2.0 - 0.5);
    const double last = std::floor((hi + 1.0) * n / 2.0 - 0.5);
    const auto a = static_cast<std::ptrdiff_t>(std::max(first, 0.0));
    const auto b = static_cast<std::ptrdiff_t>(std::min(last, n - 1.0));
    return std::pair<std::ptrdiff_t, std::ptrdiff_t>{a, b};
  };

  for (const GaussianPrimitive2D& prim : prims) {
    Vec2 mu = prim.mu;
    if (std::abs(mu.x) > 1.0 || std::abs(mu.y) > 1.0) {
      std::cerr << "warning: joint mean (" << mu.x << ", " << mu.y
                << ") outside [-1, 1], clamped\n";
      mu.x = std::clamp(mu.x, -1.0, 1.0);
      mu.y = std::clamp(mu.y, -1.0, 1.0);
    }
    const Cov2 inv = prim.sigma.inverse();
    const double half = config.truncation_sigmas * std::max(prim.scale_x, prim.scale_y);
    const auto [x0, x1] = pixel_range(mu.x - half, mu.x + half, w);
    const auto [y0, y1] = pixel_range(mu.y - half, mu.y + half, h);
    if (x0 > x1) continue;
    // Along a row q is quadratic in the column, so exp(-q/2) advances by a
    // ratio that itself changes by the constant factor exp(-inv.xx dx^2).
    const double step = 2.0 / static_cast<double>(w);
    const double ratio_step = std::exp(-inv.xx * step * step);
    for (std::ptrdiff_t yi = y0; yi <= y1; ++yi) {
      const double dy = pixel_center(static_cast<std::size_t>(yi), h) - mu.y;
      const std::size_t row = static_cast<std::size_t>(yi) * w;
      double dx = pixel_center(static_cast<std::size_t>(x0), w) - mu.x;
      double q = inv.xx * dx * dx + 2.0 * inv.xy * dx * dy + inv.yy * dy * dy;
      double g = std::exp(-0.5 * q);
      double ratio = std::exp(-0.5 * (inv.xx * (2.0 * dx * step + step * step) + 2.0 * inv.xy * step * dy));
      for (std::ptrdiff_t xi = x0;; ++xi) {
        const std::size_t idx = row + static_cast<std::size_t>(xi);
        if (use_max) {
          if (trace) trace->record(g > out[idx]);
          if (g > out[idx]) {
            out[idx] = g;
            if (grad) d_log_scale[idx] = g * q;
          }
        } else {
          out[idx] += g;
          if (grad) d_log_scale[idx] += g * q;
        }
        if (xi == x1) break;
        q += inv.xx * (2.0 * dx * step + step * step) + 2.0 * inv.xy * step * dy;
        dx += step;
        g *= ratio;
        ratio *= ratio_step;
      }
    }
  }
  if (!use_max) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (trace) trace->record(out[i] > 1.0);
      if (out[i] > 1.0) {
        out[i] = 1.0;
        if (grad) d_log_scale[i] = 0.0;
      }
    }
  }
}

std::vector<PrimitiveGrid> build_primitive_grids(const KinematicSequence& kin,
                                                 const RenderConfig& config) {
  config.validate();
  std::vector<PrimitiveGrid> grids;
  for (const View& view : config.views_for(kin.channels)) {
    const ProjectedView proj = project_to_view(kin, view);
    PrimitiveGrid grid;
    grid.view = view;
    grid.frames = kin.frames;
    grid.joints = kin.joints;
    grid.primitives.reserve(kin.frames * kin.joints);
    for (std::size_t k = 0; k < kin.frames * kin.joints; ++k) {
      GaussianPrimitive2D prim =
          build_covariance({proj.velocities[2 * k], proj.velocities[2 * k + 1]}, config);
      prim.mu = {proj.positions[2 * k], proj.positions[2 * k + 1]};
      grid.primitives.push_back(prim);
    }
    grids.push_back(std::move(grid));
  }
  return grids;
}

RenderResult render_sequence(const KinematicSequence& kin, const RenderConfig& config,
                             bool with_gradient) {
  RenderResult result;
  result.grids = build_primitive_grids(kin, config);
  HeatmapStack& hm = result.heatmaps;
  hm.views = result.grids.size();
  hm.frames = kin.frames;
  hm.height = config.height;
  hm.width = config.width;
  hm.source = kin.source;
  hm.config = config;
  hm.config.views = config.views_for(kin.channels);
  const std::size_t plane = hm.height * hm.width;
  hm.values.assign(hm.views * hm.frames * plane, 0.0);
  if (with_gradient) hm.d_log_scale.assign(hm.values.size(), 0.0);
  for (std::size_t vi = 0; vi < hm.views; ++vi) {
    const PrimitiveGrid& grid = result.grids[vi];
    for (std::size_t t = 0; t < kin.frames; ++t) {
      const std::size_t off = hm.index(vi, t, 0, 0);
      std::span<const GaussianPrimitive2D> prims(grid.primitives.data() + t * kin.joints,
                                                 kin.joints);
      std::span<double> grad_out;
      if (with_gradient) grad_out = {hm.d_log_scale.data() + off, plane};
      render_frame(prims, config, {hm.values.data() + off, plane}, grad_out);
    }
  }
  return result;
}

ad::Var render_batch(const ad::Var& log_scale, std::span<const KinematicSequence* const> batch,
                     const RenderConfig& config) {
  if (log_scale.shape() != ad::Shape{1}) {
    throw DimensionError("render_batch: log_scale must be a scalar");
  }
  if (batch.empty()) throw DimensionError("render_batch: empty batch");
  RenderConfig cfg = config;
  cfg.log_scale = log_scale.value()[0];
  // Beyond this the squared scales under- or overflow.
  if (!(std::abs(cfg.log_scale) < 100.0)) {
    throw DataError("render_batch: log_scale " + std::to_string(cfg.log_scale) +
                    " is out of range; training has diverged");
  }
  const std::size_t frames = batch.front()->frames;
  const std::size_t views = cfg.views_for(batch.front()->channels).size();
  const std::size_t plane = cfg.height * cfg.width;
  ad::Tensor out({batch.size() * frames, views, cfg.height, cfg.width});
  ad::Tensor deriv(out.shape());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const KinematicSequence& kin = *batch[b];
    if (kin.frames != frames || kin.channels != batch.front()->channels) {
      throw DimensionError("render_batch: sequences in a batch must share T and C");
    }
    const RenderResult r = render_sequence(kin, cfg, true);
    for (std::size_t vi = 0; vi < views; ++vi)
      for (std::size_t t = 0; t < frames; ++t) {
        const std::size_t src = r.heatmaps.index(vi, t, 0, 0);
        const std::size_t dst = ((b * frames + t) * views + vi) * plane;
        std::copy_n(r.heatmaps.values.data() + src, plane, out.data() + dst);
        std::copy_n(r.heatmaps.d_log_scale.data() + src, plane, deriv.data() + dst);
      }
  }
  out.check_finite("render_batch");
  auto node = std::make_shared<ad::Node>();
  node->value = std::move(out);
  node->inputs.push_back(log_scale.node());
  node->requires_grad = log_scale.requires_grad();
  if (node->requires_grad) {
    auto ln = log_scale.node();
    node->backward = [ln, deriv = std::move(deriv)](ad::Node& self) {
      double s = 0.0;
      for (std::size_t i = 0; i < deriv.size(); ++i) s += self.grad[i] * deriv[i];
      ln->grad_buffer()[0] += s;
    };
  }
  return ad::Var(std::move(node));
}

}  // namespace kgs
