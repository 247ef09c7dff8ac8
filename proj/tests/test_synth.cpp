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

#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <numbers>
#include <numeric>

#include "kgs/errors.hpp"
#include "kgs/splat.hpp"
#include "kgs/synth.hpp"
#include "kgs/topology.hpp"
#include "support.hpp"

using namespace kgs;
using doctest::Approx;

namespace {

SyntheticTaskSpec spec_for(TaskKind task, std::size_t per_class, double noise, std::uint64_t seed) {
  SyntheticTaskSpec s;
  s.task = task;
  s.samples_per_class = per_class;
  s.noise_std = noise;
  s.seed = seed;
  return s;
}

double joint_distance(const SkeletonSequence& s, std::size_t t0, std::size_t t1, std::size_t v) {
  double d = 0.0;
  for (std::size_t c = 0; c < s.channels; ++c) d += std::pow(s.at(t1, v, c) - s.at(t0, v, c), 2);
  return std::sqrt(d);
}

/// Pearson statistic of a 2 x B contingency table, returns the p-value.
double homogeneity_p(const std::vector<double>& a, const std::vector<double>& b) {
  const double na = std::accumulate(a.begin(), a.end(), 0.0), nb = std::accumulate(b.begin(), b.end(), 0.0);
  double stat = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double col = a[i] + b[i];
    if (col == 0.0) continue;
    ++used;
    const double ea = col * na / (na + nb), eb = col * nb / (na + nb);
    stat += (a[i] - ea) * (a[i] - ea) / ea + (b[i] - eb) * (b[i] - eb) / eb;
  }
  const boost::math::chi_squared dist(static_cast<double>(used - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

}  // namespace

TEST_CASE("task names and spec round trip") {
  CHECK(parse_task("speed_discrimination") == TaskKind::SpeedDiscrimination);
  CHECK(parse_task("correlation") == TaskKind::CorrelationTopology);
  CHECK(to_string(TaskKind::TrajectoryClasses) == "trajectory_classes");
  CHECK_THROWS_AS(parse_task("jumping"), ConfigError);
  CHECK(task_classes(TaskKind::TrajectoryClasses) == 3);
  CHECK(task_classes(TaskKind::SpeedDiscrimination) == 2);

  auto s = spec_for(TaskKind::CorrelationTopology, 7, 0.02, 99);
  s.frames = 12;
  const auto text = serialize_task_spec(s);
  CHECK(serialize_task_spec(parse_task_spec(text)) == text);
  CHECK(parse_task_spec(text).frames == 12);

  s.samples_per_class = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = spec_for(TaskKind::SpeedDiscrimination, 1, -0.1, 0);
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = spec_for(TaskKind::CorrelationTopology, 1, 0.0, 0);
  s.joints = 2;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("speed task geometry") {
  const auto s = spec_for(TaskKind::SpeedDiscrimination, 20, 0.0, 4);
  const auto data = generate_speed_task(s);
  REQUIRE(data.size() == 40);
  const double w = s.base_rate;
  for (const auto& seq : data) {
    REQUIRE(seq.label.has_value());
    const double rate = *seq.label == 0 ? w : 2.0 * w;
    for (std::size_t t = 0; t + 1 < seq.frames; ++t) {
      CHECK(joint_distance(seq, t, t + 1, 0) == Approx(2.0 * 0.5 * std::sin(rate / 2.0)).epsilon(1e-12));
      for (std::size_t v = 1; v < seq.joints; ++v) CHECK(joint_distance(seq, t, t + 1, v) == 0.0);
    }
    CHECK(std::hypot(seq.at(3, 0, 0), seq.at(3, 0, 1)) == Approx(0.5).epsilon(1e-12));
  }
  // Chord ratio approaches 2 as the rate shrinks.
  auto slow = s;
  slow.base_rate = 0.01;
  const auto tiny = generate_speed_task(slow);
  const double ratio = joint_distance(tiny.back(), 0, 1, 0) / joint_distance(tiny.front(), 0, 1, 0);
  CHECK(ratio == Approx(2.0).epsilon(1e-4));
}

TEST_CASE("speed task position marginals match across classes") {
  const auto data = generate_speed_task(spec_for(TaskKind::SpeedDiscrimination, 100, 0.0, 11));
  const std::size_t bins = 10;
  for (std::size_t t : {0u, 7u, 15u}) {
    std::vector<double> h0(bins), h1(bins);
    for (const auto& seq : data) {
      const double a = std::atan2(seq.at(t, 0, 1), seq.at(t, 0, 0)) + std::numbers::pi;
      const auto b = std::min(bins - 1, static_cast<std::size_t>(a / (2.0 * std::numbers::pi) * bins));
      (*seq.label == 0 ? h0 : h1)[b] += 1.0;
    }
    CHECK(homogeneity_p(h0, h1) > 0.01);
  }
}

TEST_CASE("generation is seeded") {
  for (auto task : {TaskKind::SpeedDiscrimination, TaskKind::CorrelationTopology, TaskKind::TrajectoryClasses}) {
    const auto a = generate_task(spec_for(task, 3, 0.02, 8));
    const auto b = generate_task(spec_for(task, 3, 0.02, 8));
    const auto c = generate_task(spec_for(task, 3, 0.02, 9));
    REQUIRE(a.size() == 3 * task_classes(task));
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].positions == b[i].positions);
      CHECK(a[i].label == b[i].label);
      differs = differs || a[i].positions != c[i].positions;
    }
    CHECK(differs);
  }
}

TEST_CASE("coordinates stay inside the unit cube") {
  for (auto task : {TaskKind::SpeedDiscrimination, TaskKind::CorrelationTopology, TaskKind::TrajectoryClasses})
    for (double noise : {0.0, 0.05, 0.5})
      for (const auto& seq : generate_task(spec_for(task, 10, noise, 3))) {
        CHECK_NOTHROW(seq.validate());
        for (double x : seq.positions) {
          CHECK(x >= -1.0);
          CHECK(x <= 1.0);
        }
      }
}

TEST_CASE("correlation task keeps the rigid pair at a constant offset") {
  const auto data = generate_correlation_task(spec_for(TaskKind::CorrelationTopology, 10, 0.0, 6));
  CHECK(correlation_roles(0) != correlation_roles(1));
  for (const auto& seq : data) {
    const auto [rigid, loner] = correlation_roles(*seq.label);
    double drift_rigid = 0.0, drift_loner = 0.0;
    for (std::size_t t = 1; t < seq.frames; ++t)
      for (std::size_t c = 0; c < seq.channels; ++c) {
        const double d0 = seq.at(0, rigid, c) - seq.at(0, 0, c);
        drift_rigid = std::max(drift_rigid, std::abs(seq.at(t, rigid, c) - seq.at(t, 0, c) - d0));
        const double e0 = seq.at(0, loner, c) - seq.at(0, 0, c);
        drift_loner = std::max(drift_loner, std::abs(seq.at(t, loner, c) - seq.at(t, 0, c) - e0));
      }
    CHECK(drift_rigid < 1e-12);
    CHECK(drift_loner > 1e-3);

    const auto kin = prepare_kinematics(seq);
    const auto prior = build_prior_adjacency(build_primitive_grids(kin, RenderConfig{}));
    CHECK(prior.at(0, rigid) > prior.at(0, loner));
  }
  const auto again = generate_correlation_task(spec_for(TaskKind::CorrelationTopology, 10, 0.0, 6));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto pa = build_prior_adjacency(build_primitive_grids(prepare_kinematics(data[i]), RenderConfig{}));
    const auto pb = build_prior_adjacency(build_primitive_grids(prepare_kinematics(again[i]), RenderConfig{}));
    CHECK(pa.matrix == pb.matrix);
  }
}

TEST_CASE("trajectory classes move along their own axes") {
  for (const auto& seq : generate_trajectory_task(spec_for(TaskKind::TrajectoryClasses, 5, 0.0, 2))) {
    double span_x = 0.0, span_y = 0.0;
    for (std::size_t t = 1; t < seq.frames; ++t) {
      span_x = std::max(span_x, std::abs(seq.at(t, 0, 0) - seq.at(0, 0, 0)));
      span_y = std::max(span_y, std::abs(seq.at(t, 0, 1) - seq.at(0, 0, 1)));
    }
    if (*seq.label == 1) CHECK(span_y == 0.0);
    if (*seq.label == 2) CHECK(span_x == 0.0);
    if (*seq.label != 2) CHECK(span_x > 0.1);
    if (*seq.label != 1) CHECK(span_y > 0.1);
  }
}

TEST_CASE("stratified split") {
  const auto data = generate_speed_task(spec_for(TaskKind::SpeedDiscrimination, 50, 0.0, 1));
  const auto [train, test] = split_dataset(data, 0.8, 5);
  CHECK(train.size() == 80);
  CHECK(test.size() == 20);
  std::size_t ones = 0;
  for (const auto& s : train) ones += *s.label == 1;
  CHECK(ones == 40);

  const auto [train2, test2] = split_dataset(data, 0.8, 5);
  const auto [train3, test3] = split_dataset(data, 0.8, 6);
  bool differs = false;
  for (std::size_t i = 0; i < train.size(); ++i) {
    CHECK(train[i].source == train2[i].source);
    differs = differs || train[i].source != train3[i].source;
  }
  CHECK(differs);

  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    auto s = spec_for(TaskKind::TrajectoryClasses, 2 + rng.below(15), 0.0, static_cast<std::uint64_t>(trial));
    const double frac = rng.uniform(0.05, 0.95);
    const auto all = generate_task(s);
    const auto [tr, te] = split_dataset(all, frac, 1);
    CHECK(tr.size() + te.size() == all.size());
    for (int label = 0; label < 3; ++label) {
      const auto n = static_cast<double>(std::count_if(tr.begin(), tr.end(), [&](auto& x) { return *x.label == label; }));
      CHECK(std::abs(n - frac * static_cast<double>(s.samples_per_class)) <= 1.0);
    }
  }

  const auto single = generate_speed_task(spec_for(TaskKind::SpeedDiscrimination, 1, 0.0, 1));
  CHECK_THROWS_AS(split_dataset(single, 0.5, 0), ConfigError);
  CHECK_THROWS_AS(split_dataset(data, 1.0, 0), ConfigError);
  CHECK_THROWS_AS(split_dataset(data, 0.0, 0), ConfigError);
}

TEST_CASE("datasets round trip through a manifest") {
  const auto spec = spec_for(TaskKind::CorrelationTopology, 3, 0.02, 21);
  const auto data = generate_task(spec);
  const auto dir = test::scratch_dir("synth_manifest");
  const auto manifest = write_dataset(data, dir, spec);
  CHECK(manifest == dir / "manifest.json");
  const auto back = load_manifest(manifest);
  REQUIRE(back.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(back[i].label == data[i].label);
    REQUIRE(back[i].positions.size() == data[i].positions.size());
    for (std::size_t j = 0; j < data[i].positions.size(); ++j) CHECK(back[i].positions[j] == data[i].positions[j]);
  }
  CHECK(test::read_file(manifest).find("\"correlation_topology\"") != std::string::npos);
  CHECK_THROWS_AS(load_manifest(dir / "missing.json"), Error);
}
