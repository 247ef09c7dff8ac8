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

#include "kgs/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "kgs/errors.hpp"
#include "kgs/random.hpp"

namespace kgs {

using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

// Static joints sit on a ring of radius 0.75 with alternating depth.
std::array<double, 3> static_joint(std::size_t index, std::size_t count) {
  const double a = 2.0 * kPi * static_cast<double>(index) / static_cast<double>(std::max<std::size_t>(count, 1)) + 0.3;
  return {0.75 * std::cos(a), 0.75 * std::sin(a), index % 2 == 0 ? 0.3 : -0.3};
}

SkeletonSequence blank(const SyntheticTaskSpec& spec, int label, std::size_t index) {
  SkeletonSequence s;
  s.frames = spec.frames;
  s.joints = spec.joints;
  s.channels = 3;
  s.positions.assign(spec.frames * spec.joints * 3, 0.0);
  s.label = label;
  s.source = to_string(spec.task) + ":" + std::to_string(label) + ":" + std::to_string(index);
  return s;
}

void set_joint(SkeletonSequence& s, std::size_t t, std::size_t v, std::array<double, 3> p) {
  for (std::size_t c = 0; c < 3; ++c) s.at(t, v, c) = p[c];
}

void add_noise_and_clamp(SkeletonSequence& s, std::span<const std::size_t> joints, double noise, Rng& rng) {
  for (std::size_t t = 0; t < s.frames; ++t)
    for (std::size_t v : joints)
      for (std::size_t c = 0; c < 3; ++c) {
        if (noise > 0.0) s.at(t, v, c) += noise * rng.normal();
        s.at(t, v, c) = std::clamp(s.at(t, v, c), -1.0, 1.0);
      }
}

std::vector<std::size_t> all_joints(std::size_t n) {
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i;
  return out;
}

Rng sample_rng(const SyntheticTaskSpec& spec, int label, std::size_t index) {
  return Rng(derive_seed(spec.seed, (static_cast<std::uint64_t>(label) << 32) + index));
}

// Smooth random path: centre plus two random sinusoids per axis.
struct SmoothPath {
  std::array<double, 3> center{};
  std::array<std::array<double, 4>, 3> terms{};  // amp1, freq1, phase1, amp2 (freq2 = 2 freq1)

  SmoothPath(std::array<double, 3> c, double amplitude, Rng& rng) : center(c) {
    for (auto& axis : terms) {
      axis = {rng.uniform(0.5, 1.0) * amplitude, rng.uniform(0.15, 0.35), rng.uniform(0.0, 2.0 * kPi),
              rng.uniform(0.0, 0.3) * amplitude};
    }
  }
  std::array<double, 3> at(double t) const {
    std::array<double, 3> p = center;
    for (std::size_t c = 0; c < 3; ++c) {
      const auto& k = terms[c];
      p[c] += k[0] * std::sin(k[1] * t + k[2]) + k[3] * std::sin(2.0 * k[1] * t + k[2]);
    }
    p[2] *= 0.5;
    return p;
  }
};

}  // namespace

TaskKind parse_task(std::string_view name) {
  if (name == "speed_discrimination" || name == "speed") return TaskKind::SpeedDiscrimination;
  if (name == "correlation_topology" || name == "correlation") return TaskKind::CorrelationTopology;
  if (name == "trajectory_classes" || name == "trajectory") return TaskKind::TrajectoryClasses;
  throw ConfigError("unknown task '" + std::string(name) +
                    "' (expected speed_discrimination|correlation_topology|trajectory_classes)");
}

std::string to_string(TaskKind task) {
  switch (task) {
    case TaskKind::SpeedDiscrimination: return "speed_discrimination";
    case TaskKind::CorrelationTopology: return "correlation_topology";
    case TaskKind::TrajectoryClasses: return "trajectory_classes";
  }
  return "unknown";
}

std::size_t task_classes(TaskKind task) { return task == TaskKind::TrajectoryClasses ? 3 : 2; }

void SyntheticTaskSpec::validate() const {
  if (samples_per_class < 1) throw ConfigError("synth: samples_per_class must be >= 1");
  if (!(noise_std >= 0.0)) throw ConfigError("synth: noise_std must be >= 0");
  if (frames < 2) throw ConfigError("synth: need T >= 2");
  const std::size_t min_joints = task == TaskKind::CorrelationTopology ? 3 : 2;
  if (joints < min_joints) {
    throw ConfigError("synth: task " + to_string(task) + " needs V >= " + std::to_string(min_joints));
  }
}

SyntheticTaskSpec parse_task_spec(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("task spec: ") + e.what());
  }
  SyntheticTaskSpec s;
  try {
    if (doc.contains("task")) s.task = parse_task(doc["task"].get<std::string>());
    s.joints = doc.value("V", s.joints);
    s.frames = doc.value("T", s.frames);
    s.samples_per_class = doc.value("samples_per_class", s.samples_per_class);
    s.noise_std = doc.value("noise_std", s.noise_std);
    s.seed = doc.value("seed", s.seed);
    s.base_rate = doc.value("base_rate", s.base_rate);
  } catch (const json::exception& e) {
    throw ParseError(std::string("task spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::string serialize_task_spec(const SyntheticTaskSpec& s) {
  json doc{{"task", to_string(s.task)}, {"V", s.joints},           {"T", s.frames},
           {"samples_per_class", s.samples_per_class}, {"noise_std", s.noise_std},
           {"seed", s.seed},          {"base_rate", s.base_rate}};
  return doc.dump(2) + "\n";
}

std::vector<SkeletonSequence> generate_speed_task(const SyntheticTaskSpec& spec) {
  spec.validate();
  std::vector<SkeletonSequence> out;
  const auto noisy = all_joints(spec.joints);
  for (int label = 0; label < 2; ++label) {
    const double rate = spec.base_rate * (label == 0 ? 1.0 : 2.0);
    for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
      Rng rng = sample_rng(spec, label, i);
      SkeletonSequence s = blank(spec, label, i);
      const double phase = rng.uniform(0.0, 2.0 * kPi);
      for (std::size_t t = 0; t < spec.frames; ++t) {
        const double a = phase + rate * static_cast<double>(t);
        set_joint(s, t, 0, {0.5 * std::cos(a), 0.5 * std::sin(a), 0.0});
        for (std::size_t v = 1; v < spec.joints; ++v) set_joint(s, t, v, static_joint(v - 1, spec.joints - 1));
      }
      // Only the static joints are jittered; the circling joint stays exact.
      add_noise_and_clamp(s, std::span(noisy).subspan(1), spec.noise_std, rng);
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::pair<std::size_t, std::size_t> correlation_roles(int label) {
  return label == 0 ? std::pair<std::size_t, std::size_t>{1, 2} : std::pair<std::size_t, std::size_t>{2, 1};
}

std::vector<SkeletonSequence> generate_correlation_task(const SyntheticTaskSpec& spec) {
  spec.validate();
  std::vector<SkeletonSequence> out;
  const auto joints = all_joints(spec.joints);
  for (int label = 0; label < 2; ++label) {
    const auto [partner, loner] = correlation_roles(label);
    for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
      Rng rng = sample_rng(spec, label, i);
      SkeletonSequence s = blank(spec, label, i);
      const SmoothPath lead({-0.45, -0.45, 0.0}, 0.2, rng);
      const SmoothPath other({0.45, 0.45, 0.0}, 0.2, rng);
      const double dir = rng.uniform(0.0, 2.0 * kPi);
      const std::array<double, 3> offset{0.12 * std::cos(dir), 0.12 * std::sin(dir), 0.0};
      for (std::size_t t = 0; t < spec.frames; ++t) {
        const auto p = lead.at(static_cast<double>(t));
        set_joint(s, t, 0, p);
        set_joint(s, t, partner, {p[0] + offset[0], p[1] + offset[1], p[2] + offset[2]});
        set_joint(s, t, loner, other.at(static_cast<double>(t)));
        for (std::size_t v = 3; v < spec.joints; ++v) set_joint(s, t, v, static_joint(v - 3, spec.joints - 3));
      }
      add_noise_and_clamp(s, joints, spec.noise_std, rng);
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<SkeletonSequence> generate_trajectory_task(const SyntheticTaskSpec& spec) {
  spec.validate();
  std::vector<SkeletonSequence> out;
  const auto joints = all_joints(spec.joints);
  for (int label = 0; label < 3; ++label) {
    for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
      Rng rng = sample_rng(spec, label, i);
      SkeletonSequence s = blank(spec, label, i);
      const double phase = rng.uniform(0.0, 2.0 * kPi);
      const double radius = rng.uniform(0.3, 0.5);
      for (std::size_t t = 0; t < spec.frames; ++t) {
        const double a = phase + spec.base_rate * static_cast<double>(t);
        std::array<double, 3> p{0.0, 0.0, 0.0};
        if (label == 0) {
          p = {radius * std::cos(a), radius * std::sin(a), 0.0};
        } else if (label == 1) {
          p = {radius * std::sin(a), 0.0, 0.0};
        } else {
          p = {0.0, radius * std::sin(a), 0.0};
        }
        set_joint(s, t, 0, p);
        for (std::size_t v = 1; v < spec.joints; ++v) set_joint(s, t, v, static_joint(v - 1, spec.joints - 1));
      }
      add_noise_and_clamp(s, joints, spec.noise_std, rng);
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<SkeletonSequence> generate_task(const SyntheticTaskSpec& spec) {
  switch (spec.task) {
    case TaskKind::SpeedDiscrimination: return generate_speed_task(spec);
    case TaskKind::CorrelationTopology: return generate_correlation_task(spec);
    case TaskKind::TrajectoryClasses: return generate_trajectory_task(spec);
  }
  throw ConfigError("unknown task");
}

std::pair<std::vector<SkeletonSequence>, std::vector<SkeletonSequence>> split_dataset(
    std::span<const SkeletonSequence> samples, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("split: train_fraction must lie in (0, 1)");
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!samples[i].label) throw DataError("split: sample " + samples[i].source + " has no label");
    by_class[*samples[i].label].push_back(i);
  }
  Rng rng(derive_seed(seed, 0x73706c6974ULL));
  std::vector<std::size_t> train_idx, test_idx;
  for (auto& [label, idx] : by_class) {
    if (idx.size() < 2) {
      throw ConfigError("split: class " + std::to_string(label) + " has fewer than 2 samples");
    }
    rng.shuffle(idx);
    const auto n = static_cast<double>(idx.size());
    auto n_train = static_cast<std::size_t>(std::llround(train_fraction * n));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    test_idx.insert(test_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  rng.shuffle(train_idx);
  rng.shuffle(test_idx);
  std::pair<std::vector<SkeletonSequence>, std::vector<SkeletonSequence>> out;
  for (std::size_t i : train_idx) out.first.push_back(samples[i]);
  for (std::size_t i : test_idx) out.second.push_back(samples[i]);
  return out;
}

std::filesystem::path write_dataset(std::span<const SkeletonSequence> samples,
                                    const std::filesystem::path& dir, const SyntheticTaskSpec& spec) {
  std::filesystem::create_directories(dir);
  json entries = json::array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "sample_%05zu.json", i);
    save_sequence(samples[i], dir / name);
    entries.push_back({{"path", name}, {"label", samples[i].label.value_or(-1)}});
  }
  json doc{{"spec", json::parse(serialize_task_spec(spec))}, {"samples", entries}};
  const auto path = dir / "manifest.json";
  std::ofstream out(path);
  if (!out) throw ConfigError(path.string() + ": cannot write manifest");
  out << doc.dump(2) << "\n";
  return path;
}

std::vector<SkeletonSequence> load_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw ParseError(manifest.string() + ": cannot open manifest");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(manifest.string() + ": " + e.what());
  }
  if (!doc.contains("samples") || !doc["samples"].is_array()) {
    throw ParseError(manifest.string() + ": missing array field 'samples'");
  }
  std::vector<SkeletonSequence> out;
  const auto base = manifest.parent_path();
  for (const json& e : doc["samples"]) {
    if (!e.contains("path")) throw ParseError(manifest.string() + ": sample entry without 'path'");
    SkeletonSequence s = load_sequence(base / e["path"].get<std::string>());
    if (e.contains("label") && e["label"].is_number_integer() && e["label"].get<int>() >= 0) {
      s.label = e["label"].get<int>();
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace kgs
