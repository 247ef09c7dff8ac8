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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "kgs/errors.hpp"
#include "kgs/network.hpp"

namespace kgs {

using nlohmann::json;

ModelConfig ModelConfig::full_scale() {
  ModelConfig c;
  c.num_blocks = 10;
  c.channels_per_stage = {64, 128, 256};
  c.stage_starts = {1, 5, 8};
  c.temporal_strides = {1, 1, 1, 1, 2, 1, 1, 2, 1, 1};
  c.visual_dim = 128;
  return c;
}

void ModelConfig::validate() const {
  if (num_blocks == 0) throw ConfigError("model: num_blocks must be positive");
  if (channels_per_stage.empty() || channels_per_stage.size() != stage_starts.size()) {
    throw ConfigError("model: channels_per_stage and stage_starts must have equal, non-zero length");
  }
  if (stage_starts.front() != 1) throw ConfigError("model: the first stage must start at block 1");
  for (std::size_t i = 0; i < stage_starts.size(); ++i) {
    if (stage_starts[i] < 1 || stage_starts[i] > num_blocks) {
      throw ConfigError("model: stage boundary " + std::to_string(stage_starts[i]) +
                        " outside [1, " + std::to_string(num_blocks) + "]");
    }
    if (i > 0 && stage_starts[i] <= stage_starts[i - 1]) {
      throw ConfigError("model: stage_starts must be increasing");
    }
    if (channels_per_stage[i] == 0) throw ConfigError("model: zero channel count");
  }
  if (temporal_strides.size() != num_blocks) {
    throw ConfigError("model: temporal_strides needs one entry per block");
  }
  for (std::size_t s : temporal_strides) {
    if (s == 0) throw ConfigError("model: temporal stride must be >= 1");
  }
  if (dilations.empty()) throw ConfigError("model: at least one dilation is required");
  for (std::size_t d : dilations) {
    if (d == 0) throw ConfigError("model: dilation must be >= 1");
  }
  if (num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
  if (visual_dim == 0) throw ConfigError("model: visual_dim must be positive");
  if (num_subsets != 1 && num_subsets != 3) throw ConfigError("model: num_subsets must be 1 or 3");
  if (joints == 0) throw ConfigError("model: joints must be positive");
  if (in_channels != 2 && in_channels != 3) throw ConfigError("model: in_channels must be 2 or 3");
  for (const auto& [a, b] : physical_edges) {
    if (a >= joints || b >= joints) {
      throw ConfigError("model: physical edge (" + std::to_string(a) + ", " + std::to_string(b) +
                        ") references a joint >= V");
    }
  }
}

std::size_t ModelConfig::block_channels(std::size_t block) const {
  std::size_t ch = channels_per_stage.front();
  for (std::size_t i = 0; i < stage_starts.size(); ++i) {
    if (block + 1 >= stage_starts[i]) ch = channels_per_stage[i];
  }
  return ch;
}

void LossConfig::validate() const {
  if (!(lambda_base > 0 && lambda_ramp_epochs > 0 && lr_base > 0 && warmup_epochs > 0 &&
        decay_factor > 0)) {
    throw ConfigError("loss: schedule constants must be positive");
  }
  for (std::size_t i = 0; i < decay_epochs.size(); ++i) {
    if (decay_epochs[i] <= 0 || (i > 0 && decay_epochs[i] <= decay_epochs[i - 1])) {
      throw ConfigError("loss: decay epochs must be positive and increasing");
    }
  }
}

void ExperimentConfig::validate() const {
  model.validate();
  render.validate();
  loss.validate();
  if (train.batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (render.height < 8 || render.width < 8) {
    throw ConfigError("render: the visual encoder needs at least 8x8 heatmaps");
  }
}

double lambda_schedule(int epoch, const LossConfig& loss) {
  if (epoch < 0) throw ConfigError("lambda schedule: epoch must be >= 0");
  return loss.lambda_base * std::min(1.0, static_cast<double>(epoch) / loss.lambda_ramp_epochs);
}

double lr_schedule(int epoch, const LossConfig& loss) {
  if (epoch < 0) throw ConfigError("lr schedule: epoch must be >= 0");
  const double t = static_cast<double>(epoch);
  if (t < loss.warmup_epochs) return loss.lr_base * t / loss.warmup_epochs;
  // Division by the reciprocal keeps decade decays exact: 0.05 / 10 == 0.005.
  const double divisor = 1.0 / loss.decay_factor;
  double lr = loss.lr_base;
  for (int d : loss.decay_epochs) {
    if (epoch >= d) lr /= divisor;
  }
  return lr;
}

void apply_ablation(ExperimentConfig& config, std::string_view name) {
  if (name == "kgsm") {
    config.ablation.kgsm = true;
  } else if (name == "pt") {
    config.ablation.pt = true;
  } else if (name == "vcg") {
    config.ablation.vcg = true;
  } else if (!name.empty() && name != "none") {
    throw ConfigError("unknown ablation '" + std::string(name) + "' (expected kgsm|pt|vcg)");
  }
}

namespace {

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("config field '") + key + "': " + e.what());
  }
}

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  ExperimentConfig c;
  const json empty = json::object();
  const json& m = doc.contains("model") ? doc["model"] : empty;
  read(m, "num_blocks", c.model.num_blocks);
  read(m, "channels_per_stage", c.model.channels_per_stage);
  read(m, "stage_starts", c.model.stage_starts);
  read(m, "temporal_strides", c.model.temporal_strides);
  read(m, "dilations", c.model.dilations);
  read(m, "num_classes", c.model.num_classes);
  read(m, "visual_dim", c.model.visual_dim);
  read(m, "beta_init", c.model.beta_init);
  read(m, "num_subsets", c.model.num_subsets);
  read(m, "physical_edges", c.model.physical_edges);
  read(m, "use_physical", c.model.use_physical);
  read(m, "joints", c.model.joints);
  read(m, "in_channels", c.model.in_channels);

  const json& r = doc.contains("render") ? doc["render"] : empty;
  read(r, "height", c.render.height);
  read(r, "width", c.render.width);
  read(r, "alpha", c.render.alpha);
  read(r, "log_scale", c.render.log_scale);
  read(r, "truncation_sigmas", c.render.truncation_sigmas);
  if (r.contains("aggregation")) c.render.aggregation = parse_aggregation(r["aggregation"].get<std::string>());
  if (r.contains("views")) {
    c.render.views.clear();
    for (const auto& v : r["views"]) c.render.views.push_back(parse_view(v.get<std::string>()));
  }
  read(r, "isotropic", c.render.isotropic);

  const json& n = doc.contains("normalization") ? doc["normalization"] : empty;
  read(n, "target_half_extent", c.normalization.target_half_extent);
  read(n, "epsilon_radius", c.normalization.epsilon_radius);

  const json& l = doc.contains("loss") ? doc["loss"] : empty;
  read(l, "lambda_base", c.loss.lambda_base);
  read(l, "lambda_ramp_epochs", c.loss.lambda_ramp_epochs);
  read(l, "lr_base", c.loss.lr_base);
  read(l, "warmup_epochs", c.loss.warmup_epochs);
  read(l, "decay_epochs", c.loss.decay_epochs);
  read(l, "decay_factor", c.loss.decay_factor);

  const json& t = doc.contains("train") ? doc["train"] : empty;
  read(t, "epochs", c.train.epochs);
  read(t, "batch_size", c.train.batch_size);
  read(t, "seed", c.train.seed);
  read(t, "momentum", c.train.momentum);
  read(t, "weight_decay", c.train.weight_decay);
  read(t, "nesterov", c.train.nesterov);

  const json& a = doc.contains("ablation") ? doc["ablation"] : empty;
  read(a, "kgsm", c.ablation.kgsm);
  read(a, "pt", c.ablation.pt);
  read(a, "vcg", c.ablation.vcg);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open config");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string serialize_config(const ExperimentConfig& c) {
  json doc;
  doc["model"] = {{"num_blocks", c.model.num_blocks},
                  {"channels_per_stage", c.model.channels_per_stage},
                  {"stage_starts", c.model.stage_starts},
                  {"temporal_strides", c.model.temporal_strides},
                  {"dilations", c.model.dilations},
                  {"num_classes", c.model.num_classes},
                  {"visual_dim", c.model.visual_dim},
                  {"beta_init", c.model.beta_init},
                  {"num_subsets", c.model.num_subsets},
                  {"physical_edges", c.model.physical_edges},
                  {"use_physical", c.model.use_physical},
                  {"joints", c.model.joints},
                  {"in_channels", c.model.in_channels}};
  json views = json::array();
  for (const View& v : c.render.views) views.push_back(v.name());
  doc["render"] = {{"height", c.render.height},
                   {"width", c.render.width},
                   {"alpha", c.render.alpha},
                   {"log_scale", c.render.log_scale},
                   {"truncation_sigmas", c.render.truncation_sigmas},
                   {"aggregation", c.render.aggregation == Aggregation::Max ? "max" : "sum"},
                   {"views", views},
                   {"isotropic", c.render.isotropic}};
  doc["normalization"] = {{"target_half_extent", c.normalization.target_half_extent},
                          {"epsilon_radius", c.normalization.epsilon_radius}};
  doc["loss"] = {{"lambda_base", c.loss.lambda_base},
                 {"lambda_ramp_epochs", c.loss.lambda_ramp_epochs},
                 {"lr_base", c.loss.lr_base},
                 {"warmup_epochs", c.loss.warmup_epochs},
                 {"decay_epochs", c.loss.decay_epochs},
                 {"decay_factor", c.loss.decay_factor}};
  doc["train"] = {{"epochs", c.train.epochs},
                  {"batch_size", c.train.batch_size},
                  {"seed", c.train.seed},
                  {"momentum", c.train.momentum},
                  {"weight_decay", c.train.weight_decay},
                  {"nesterov", c.train.nesterov}};
  doc["ablation"] = {{"kgsm", c.ablation.kgsm}, {"pt", c.ablation.pt}, {"vcg", c.ablation.vcg}};
  return doc.dump(2) + "\n";
}

}  // namespace kgs
