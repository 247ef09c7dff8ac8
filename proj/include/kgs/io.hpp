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

// On-disk artifacts: graymaps, lossless CSV matrices, JSON sidecars and the
// per-directory run manifest.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kgs/splat.hpp"
#include "kgs/topology.hpp"

namespace kgs {

struct RunManifest {
  std::string command;
  std::string config_path;
  std::vector<std::string> input_paths;
  std::string output_directory;
  std::uint64_t seed = 0;
  std::string timestamp;  // UTC, ISO 8601
};

/// Writes `dir`/run_manifest.json, replacing any previous manifest.
std::filesystem::path write_run_manifest(const RunManifest& manifest, const std::filesystem::path& dir);
std::string utc_timestamp();

/// Binary (P5) 8-bit graymap; values are clamped to [0, 1].
void write_pgm(const std::filesystem::path& path, std::span<const double> values, std::size_t height,
               std::size_t width);

/// Row-major matrix as CSV with round-trip (%.17g) precision.
void write_matrix_csv(const std::filesystem::path& path, std::span<const double> values, std::size_t rows,
                      std::size_t cols);
std::vector<double> read_matrix_csv(const std::filesystem::path& path, std::size_t* rows = nullptr,
                                    std::size_t* cols = nullptr);

/// Per view and frame: `<view>_t<frame>.pgm` and `.csv`, plus heatmaps.json.
/// Returns the number of graymaps written.
std::size_t write_heatmaps(const HeatmapStack& stack, const std::filesystem::path& dir);

/// The matrix as CSV and a `<path>.json` sidecar with its provenance.
void write_prior(const PriorAdjacency& prior, const std::filesystem::path& csv_path);

}  // namespace kgs
