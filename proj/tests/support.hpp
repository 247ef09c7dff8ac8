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

// Shared helpers for the unit tests: scratch directories, sequence builders
// and finite-difference checks for tape operations.

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "kgs/autograd.hpp"
#include "kgs/random.hpp"
#include "kgs/skeleton.hpp"

namespace kgs::test {

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("kgs_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

inline SkeletonSequence make_sequence(std::size_t frames, std::size_t joints, std::size_t channels,
                                      std::function<double(std::size_t, std::size_t, std::size_t)> f) {
  SkeletonSequence s;
  s.frames = frames;
  s.joints = joints;
  s.channels = channels;
  s.positions.resize(frames * joints * channels);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t v = 0; v < joints; ++v)
      for (std::size_t c = 0; c < channels; ++c) s.at(t, v, c) = f(t, v, c);
  return s;
}

inline SkeletonSequence random_sequence(std::size_t frames, std::size_t joints, std::size_t channels, Rng& rng,
                                        double lo = -1.0, double hi = 1.0) {
  return make_sequence(frames, joints, channels, [&](auto, auto, auto) { return rng.uniform(lo, hi); });
}

inline ad::Tensor random_tensor(ad::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  ad::Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

inline double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

/// Max element-wise relative error between tape gradients of `loss` and
/// central differences (h = 1e-5) over every entry of every parameter.
inline double finite_difference_error(const std::function<ad::Var()>& loss,
                                      const std::vector<ad::Parameter*>& params, double h = 1e-5) {
  ad::gradients(loss(), params);
  double worst = 0.0;
  for (ad::Parameter* p : params) {
    const std::vector<double> analytic(p->gradient.values().begin(), p->gradient.values().end());
    auto values = p->value.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = loss().value()[0];
      values[i] = saved - h;
      const double down = loss().value()[0];
      values[i] = saved;
      worst = std::max(worst, rel_error(analytic[i], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

}  // namespace kgs::test
