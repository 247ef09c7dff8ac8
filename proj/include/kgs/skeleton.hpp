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
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace kgs {

/// One person's joint coordinates over time, stored frame-major as
/// positions[(t * joints + v) * channels + c].
struct SkeletonSequence {
  std::size_t frames = 0;
  std::size_t joints = 0;
  std::size_t channels = 0;
  std::vector<double> positions;
  std::optional<int> label;
  std::string source;  // file path or generator tag, for provenance only

  double at(std::size_t t, std::size_t v, std::size_t c) const {
    return positions[(t * joints + v) * channels + c];
  }
  double& at(std::size_t t, std::size_t v, std::size_t c) {
    return positions[(t * joints + v) * channels + c];
  }

  /// Throws DimensionError / DataError when an invariant does not hold:
  /// T >= 2, C in {2, 3}, payload size T*V*C, every coordinate finite.
  void validate() const;
};

struct NormalizationParams {
  double target_half_extent = 0.8;
  double epsilon_radius = 1e-8;
};

/// Normalised positions plus forward-difference velocities, same layout as
/// SkeletonSequence::positions.
struct KinematicSequence {
  std::size_t frames = 0;
  std::size_t joints = 0;
  std::size_t channels = 0;
  std::vector<double> positions;
  std::vector<double> velocities;
  std::optional<int> label;
  std::string source;

  std::size_t index(std::size_t t, std::size_t v, std::size_t c) const {
    return (t * joints + v) * channels + c;
  }
};

SkeletonSequence parse_sequence(std::string_view text, std::string_view source = "<memory>");
SkeletonSequence load_sequence(const std::filesystem::path& path);
std::string serialize_sequence(const SkeletonSequence& seq);
void save_sequence(const SkeletonSequence& seq, const std::filesystem::path& path);

/// Per frame: translate the joint centroid to the origin and scale so the
/// farthest joint sits at distance params.target_half_extent. Frames whose
/// radius is below epsilon_radius are centred but not scaled.
SkeletonSequence normalize_sequence(const SkeletonSequence& seq,
                                    const NormalizationParams& params = {});

/// v[t] = x[t+1] - x[t] for t < T-1; the last frame repeats v[T-2].
KinematicSequence compute_velocity(const SkeletonSequence& seq);

/// normalize_sequence followed by compute_velocity.
KinematicSequence prepare_kinematics(const SkeletonSequence& seq,
                                     const NormalizationParams& params = {});

}  // namespace kgs
