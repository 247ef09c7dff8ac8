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

#include <cmath>

#include "kgs/errors.hpp"
#include "kgs/synth.hpp"
#include "kgs/topology.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace kgs;
using doctest::Approx;

namespace {

const Cov2 kIdentity{1.0, 0.0, 1.0};

Cov2 random_spd(Rng& rng) {
  const double a = std::exp(rng.uniform(-4.0, 1.0)), b = std::exp(rng.uniform(-4.0, 1.0));
  const auto m = oracle::covariance(rng.uniform(-3.2, 3.2), a, b);
  return {m[0][0], m[0][1], m[1][1]};
}

Vec2 random_point(Rng& rng) { return {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)}; }

GaussianPrimitive2D primitive(Vec2 mu, Cov2 sigma) {
  GaussianPrimitive2D p;
  p.mu = mu;
  p.sigma = sigma;
  return p;
}

PrimitiveGrid grid(std::size_t frames, std::vector<GaussianPrimitive2D> per_frame) {
  PrimitiveGrid g{parse_view("XY"), frames, per_frame.size(), {}};
  for (std::size_t t = 0; t < frames; ++t) g.primitives.insert(g.primitives.end(), per_frame.begin(), per_frame.end());
  return g;
}

}  // namespace

TEST_CASE("bhattacharyya worked examples") {
  CHECK(bhattacharyya_distance({0.3, -0.2}, {0.2, 0.05, 0.1}, {0.3, -0.2}, {0.2, 0.05, 0.1}) == 0.0);
  CHECK(bhattacharyya_distance({0, 0}, kIdentity, {2, 0}, kIdentity) == Approx(0.5).epsilon(1e-9));
  CHECK(bhattacharyya_distance({0, 0}, kIdentity, {0, 0}, {4, 0, 4}) == Approx(0.5 * std::log(6.25 / 4.0)).epsilon(1e-12));
  CHECK(std::abs(bhattacharyya_distance({0, 0}, kIdentity, {0, 0}, {4, 0, 4}) - 0.223144) < 1e-6);
}

TEST_CASE("bhattacharyya rejects matrices that are not positive definite") {
  CHECK_THROWS_AS(bhattacharyya_distance({0, 0}, {1, 2, 1}, {0, 0}, kIdentity), MatrixError);
  CHECK_THROWS_AS(bhattacharyya_distance({0, 0}, kIdentity, {0, 0}, {-1, 0, 1}), MatrixError);
  CHECK_THROWS_AS(bhattacharyya_distance({0, 0}, kIdentity, {0, 0}, {0, 0, 0}), MatrixError);
}

TEST_CASE("bhattacharyya is symmetric, non-negative and zero on itself") {
  Rng rng(31);
  for (int i = 0; i < 10000; ++i) {
    const Vec2 a = random_point(rng), b = random_point(rng);
    const Cov2 sa = random_spd(rng), sb = random_spd(rng);
    const double ab = bhattacharyya_distance(a, sa, b, sb);
    const double ba = bhattacharyya_distance(b, sb, a, sa);
    CHECK(std::abs(ab - ba) <= 1e-12 * std::max(1.0, ab));
    CHECK(ab >= 0.0);
    CHECK(bhattacharyya_distance(a, sa, a, sa) == 0.0);
  }
}

TEST_CASE("diagonal covariances agree with the per-axis oracle") {
  Rng rng(32);
  for (int i = 0; i < 10000; ++i) {
    const Vec2 a = random_point(rng), b = random_point(rng);
    const std::array<double, 2> va{std::exp(rng.uniform(-6.0, 1.0)), std::exp(rng.uniform(-6.0, 1.0))};
    const std::array<double, 2> vb{std::exp(rng.uniform(-6.0, 1.0)), std::exp(rng.uniform(-6.0, 1.0))};
    const double got = bhattacharyya_distance(a, {va[0], 0.0, va[1]}, b, {vb[0], 0.0, vb[1]});
    const double want = oracle::bhattacharyya_diagonal({a.x, a.y}, va, {b.x, b.y}, vb);
    CHECK(std::abs(got - want) <= 1e-10 * std::max(1.0, want));
  }
}

TEST_CASE("affinity falls as the means separate") {
  Rng rng(33);
  for (int i = 0; i < 200; ++i) {
    const Cov2 s = random_spd(rng);
    const double ux = rng.uniform(-1.0, 1.0), uy = rng.uniform(-1.0, 1.0);
    double previous = 2.0;
    for (double r = 0.0; r <= 1.0; r += 0.05) {
      const double affinity = std::exp(-bhattacharyya_distance({0, 0}, s, {r * ux, r * uy}, s));
      CHECK(affinity < previous);
      previous = affinity;
    }
  }
}

TEST_CASE("prior adjacency worked examples") {
  const GaussianPrimitive2D one = primitive({0, 0}, kIdentity);
  const auto single = build_prior_adjacency(std::vector{grid(4, {one})});
  REQUIRE(single.matrix.size() == 1);
  CHECK(single.matrix[0] == 1.0);

  const auto pair = build_prior_adjacency(std::vector{grid(6, {one, primitive({2, 0}, kIdentity)})});
  CHECK(pair.joints == 2);
  CHECK(pair.frames == 6);
  CHECK(pair.views == 1);
  CHECK(pair.at(0, 1) == Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(pair.at(0, 1) == Approx(0.606531).epsilon(1e-6));
  CHECK(pair.at(0, 0) == 1.0);
}

TEST_CASE("repeating a frame leaves the prior unchanged") {
  Rng rng(34);
  std::vector<GaussianPrimitive2D> frame;
  for (int v = 0; v < 5; ++v) frame.push_back(primitive(random_point(rng), random_spd(rng)));
  const auto a = build_prior_adjacency(std::vector{grid(1, frame)});
  const auto b = build_prior_adjacency(std::vector{grid(9, frame)});
  for (std::size_t i = 0; i < a.matrix.size(); ++i) CHECK(b.matrix[i] == Approx(a.matrix[i]).epsilon(1e-14));
}

TEST_CASE("prior averages affinities over frames and views") {
  const GaussianPrimitive2D o = primitive({0, 0}, kIdentity);
  PrimitiveGrid g{parse_view("XY"), 2, 2, {o, primitive({2, 0}, kIdentity), o, o}};
  PrimitiveGrid h{parse_view("YZ"), 2, 2, {o, o, o, primitive({0, 4}, kIdentity)}};
  const auto prior = build_prior_adjacency(std::vector{g, h});
  CHECK(prior.at(0, 1) == Approx((std::exp(-0.5) + 1.0 + 1.0 + std::exp(-2.0)) / 4.0).epsilon(1e-14));
  CHECK(prior.views == 2);
}

TEST_CASE("prior invariants hold on synthetic sequences") {
  for (auto task : {TaskKind::SpeedDiscrimination, TaskKind::CorrelationTopology, TaskKind::TrajectoryClasses}) {
    SyntheticTaskSpec spec;
    spec.task = task;
    spec.samples_per_class = 4;
    spec.noise_std = 0.02;
    spec.seed = 5;
    for (const auto& sample : generate_task(spec)) {
      const auto kin = prepare_kinematics(sample);
      const auto prior = build_prior_adjacency(build_primitive_grids(kin, RenderConfig{}));
      const std::size_t v = prior.joints;
      CHECK(v == spec.joints);
      for (std::size_t i = 0; i < v; ++i) {
        CHECK(prior.at(i, i) == 1.0);
        for (std::size_t j = 0; j < v; ++j) {
          CHECK(std::abs(prior.at(i, j) - prior.at(j, i)) < 1e-12);
          CHECK(prior.at(i, j) > 0.0);
          CHECK(prior.at(i, j) <= 1.0);
        }
      }
    }
  }
}
