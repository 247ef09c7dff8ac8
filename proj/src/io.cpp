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

#include "kgs/io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "kgs/errors.hpp"

namespace kgs {

using nlohmann::json;

namespace {

std::ofstream open_out(const std::filesystem::path& path, bool binary = false) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw ConfigError(path.string() + ": cannot open for writing");
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json render_config_json(const RenderConfig& c) {
  json views = json::array();
  for (const View& v : c.views) views.push_back(v.name());
  return {{"height", c.height},
          {"width", c.width},
          {"alpha", c.alpha},
          {"log_scale", c.log_scale},
          {"truncation_sigmas", c.truncation_sigmas},
          {"aggregation", to_string(c.aggregation)},
          {"views", views},
          {"isotropic", c.isotropic}};
}

}  // namespace

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::filesystem::path write_run_manifest(const RunManifest& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto path = dir / "run_manifest.json";
  json doc{{"command", m.command},
           {"config_path", m.config_path},
           {"input_paths", m.input_paths},
           {"output_directory", m.output_directory},
           {"seed", m.seed},
           {"timestamp", m.timestamp.empty() ? utc_timestamp() : m.timestamp}};
  auto out = open_out(path);
  out << doc.dump(2) << "\n";
  return path;
}

void write_pgm(const std::filesystem::path& path, std::span<const double> values, std::size_t height,
               std::size_t width) {
  if (values.size() != height * width) {
    throw DimensionError("pgm: " + std::to_string(values.size()) + " values for " + std::to_string(height) + "x" +
                         std::to_string(width));
  }
  auto out = open_out(path, true);
  out << "P5\n" << width << " " << height << "\n255\n";
  std::string row(values.size(), '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    row[i] = static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(values[i], 0.0, 1.0) * 255.0)));
  }
  out.write(row.data(), static_cast<std::streamsize>(row.size()));
}

void write_matrix_csv(const std::filesystem::path& path, std::span<const double> values, std::size_t rows,
                      std::size_t cols) {
  if (values.size() != rows * cols) throw DimensionError("csv: payload does not match shape");
  auto out = open_out(path);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (c) out << ',';
      out << format_double(values[r * cols + c]);
    }
    out << '\n';
  }
}

std::vector<double> read_matrix_csv(const std::filesystem::path& path, std::size_t* rows, std::size_t* cols) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open");
  std::vector<double> values;
  std::size_t r = 0, width = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t n = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParseError(path.string() + ":" + std::to_string(r + 1) + ": bad number '" + cell + "'");
      }
      ++n;
    }
    if (r == 0) width = n;
    if (n != width) throw ParseError(path.string() + ":" + std::to_string(r + 1) + ": ragged row");
    ++r;
  }
  if (rows) *rows = r;
  if (cols) *cols = width;
  return values;
}

std::size_t write_heatmaps(const HeatmapStack& stack, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto views = stack.config.views;
  std::size_t written = 0;
  json files = json::array();
  for (std::size_t v = 0; v < stack.views; ++v) {
    const std::string name = v < views.size() ? views[v].name() : "view" + std::to_string(v);
    for (std::size_t t = 0; t < stack.frames; ++t) {
      char stem[64];
      std::snprintf(stem, sizeof stem, "%s_t%04zu", name.c_str(), t);
      const auto frame = stack.frame(v, t);
      write_pgm(dir / (std::string(stem) + ".pgm"), frame, stack.height, stack.width);
      write_matrix_csv(dir / (std::string(stem) + ".csv"), frame, stack.height, stack.width);
      files.push_back(stem);
      ++written;
    }
  }
  json doc{{"T", stack.frames}, {"views", stack.views}, {"H", stack.height}, {"W", stack.width},
           {"source", stack.source}, {"config", render_config_json(stack.config)}, {"frames", files}};
  auto out = open_out(dir / "heatmaps.json");
  out << doc.dump(2) << "\n";
  return written;
}

void write_prior(const PriorAdjacency& prior, const std::filesystem::path& csv_path) {
  write_matrix_csv(csv_path, prior.matrix, prior.joints, prior.joints);
  json doc{{"V", prior.joints}, {"frames", prior.frames}, {"views", prior.views}, {"source", prior.source}};
  auto out = open_out(csv_path.string() + ".json");
  out << doc.dump(2) << "\n";
}

}  // namespace kgs
