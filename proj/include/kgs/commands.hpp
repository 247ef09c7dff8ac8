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

// Command implementations behind the `kgs` tool. Each writes its artifacts
// and a run manifest; errors surface as kgs::Error.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "kgs/network.hpp"
#include "kgs/synth.hpp"

namespace kgs {

struct RenderOptions {
  std::filesystem::path input;
  std::filesystem::path out;
  std::size_t size = 32;
  std::string aggregation = "max";
  std::optional<double> log_scale;
  std::optional<double> alpha;
  bool isotropic = false;
};
/// Returns the number of graymaps written.
std::size_t cmd_render(const RenderOptions& options);

PriorAdjacency cmd_topology(const std::filesystem::path& input, const std::filesystem::path& out_csv);

/// Prints one line per parameter group to `log`; returns the report.
GradCheckReport cmd_gradcheck(const std::optional<std::filesystem::path>& config_path,
                              std::optional<std::uint64_t> seed, std::ostream& log,
                              const std::string& corrupt_parameter = {});

struct TrainOptions {
  std::filesystem::path config;
  std::filesystem::path data;
  std::filesystem::path out;
  std::string ablate;
};
/// Trains up to config.train.epochs, resuming from out/checkpoint.json when
/// present. Appends one metrics.csv row per epoch. Returns the final model.
Model cmd_train(const TrainOptions& options, std::ostream& log);

double cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& data);

/// Generates and writes the dataset; `task` overrides the spec's task.
std::filesystem::path cmd_synth(const std::string& task, const std::filesystem::path& out,
                                const std::optional<std::filesystem::path>& spec_path);

}  // namespace kgs
