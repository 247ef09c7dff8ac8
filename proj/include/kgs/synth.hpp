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

// Seeded synthetic skeleton datasets. Each task isolates one mechanism:
//  - speed_discrimination: one joint circles at rate w or 2w from a random
//    phase, so per-frame positions carry no class information and only the
//    motion itself separates the classes;
//  - correlation_topology: a rigid joint pair versus an independent joint;
//  - trajectory_classes: circle / horizontal / vertical motion of one joint.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kgs/skeleton.hpp"

namespace kgs {

enum class TaskKind { SpeedDiscrimination, CorrelationTopology, TrajectoryClasses };

TaskKind parse_task(std::string_view name);
std::string to_string(TaskKind task);
std::size_t task_classes(TaskKind task);

struct SyntheticTaskSpec {
  TaskKind task = TaskKind::SpeedDiscrimination;
  std::size_t joints = 5;
  std::size_t frames = 16;
  std::size_t samples_per_class = 50;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
  double base_rate = std::numbers::pi / 8.0;  // radians per frame for class 0 / trajectories

  void validate() const;
};

SyntheticTaskSpec parse_task_spec(std::string_view text);
std::string serialize_task_spec(const SyntheticTaskSpec& spec);

/// Joint 0 moves on a radius-0.5 circle in the XY plane at base_rate
/// (label 0) or 2 * base_rate (label 1); the other joints are static.
std::vector<SkeletonSequence> generate_speed_task(const SyntheticTaskSpec& spec);

/// Joint 0 follows a random smooth path. Label 0: joint 1 is rigidly
/// attached to it and joint 2 moves independently far away; label 1 swaps
/// the roles of joints 1 and 2.
std::vector<SkeletonSequence> generate_correlation_task(const SyntheticTaskSpec& spec);

/// Joint 0 traces a circle (0), a horizontal stroke (1) or a vertical
/// stroke (2) from a random phase.
std::vector<SkeletonSequence> generate_trajectory_task(const SyntheticTaskSpec& spec);

std::vector<SkeletonSequence> generate_task(const SyntheticTaskSpec& spec);

/// For correlation_topology samples: (rigid partner, independent joint) of
/// joint 0 given the label.
std::pair<std::size_t, std::size_t> correlation_roles(int label);

/// Stratified seeded split; per-class train counts round the exact
/// proportion. Throws ConfigError for classes with fewer than 2 samples.
std::pair<std::vector<SkeletonSequence>, std::vector<SkeletonSequence>> split_dataset(
    std::span<const SkeletonSequence> samples, double train_fraction, std::uint64_t seed);

/// Writes sample_NNNNN.json files plus manifest.json into `dir`; returns the
/// manifest path.
std::filesystem::path write_dataset(std::span<const SkeletonSequence> samples,
                                    const std::filesystem::path& dir,
                                    const SyntheticTaskSpec& spec);

/// Loads every sequence listed in a manifest (paths relative to it).
std::vector<SkeletonSequence> load_manifest(const std::filesystem::path& manifest);

}  // namespace kgs
