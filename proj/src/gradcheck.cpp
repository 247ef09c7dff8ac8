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
#include <limits>
#include <numeric>

#include "kgs/errors.hpp"
#include "kgs/network.hpp"
#include "kgs/random.hpp"
#include "kgs/synth.hpp"

namespace kgs {

namespace {

double batch_loss(Model& model, std::span<const Sample* const> ptrs, std::span<const int> labels,
                  const ad::Tensor& prior_mean, const GradCheckOptions& options, LossBreakdown* keep) {
  auto out = model.forward(ptrs, true);
  const auto& cfg = model.config();
  LossBreakdown loss = loss_total(out.logits, labels, out.learned_topology, prior_mean, options.epoch,
                                  cfg.loss, !cfg.ablation.pt);
  const double v = loss.total.value().data()[0];
  if (keep) *keep = std::move(loss);
  return v;
}

std::vector<std::size_t> pick_entries(std::size_t size, std::size_t limit, Rng& rng) {
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (size <= limit) return idx;
  rng.shuffle(idx);
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckReport gradient_check(Model& model, std::span<const Sample> batch, const GradCheckOptions& options) {
  if (batch.empty()) throw ConfigError("gradcheck: empty batch");
  if (!(options.step > 0.0)) throw ConfigError("gradcheck: step must be > 0");
  std::vector<const Sample*> ptrs;
  std::vector<int> labels;
  for (const Sample& s : batch) {
    ptrs.push_back(&s);
    labels.push_back(s.label);
  }
  const ad::Tensor prior_mean = batch_prior_mean(ptrs);

  auto params = model.parameters();
  std::erase_if(params, [](const ad::Parameter* p) { return p->frozen; });

  LossBreakdown loss;
  double base_loss = 0.0;
  std::uint64_t base_digest = 0;
  {
    ad::BranchTrace trace;
    base_loss = batch_loss(model, ptrs, labels, prior_mean, options, &loss);
    base_digest = trace.digest();
  }
  ad::gradients(loss.total, params);

  GradCheckReport report;
  Rng rng(derive_seed(options.seed, 0x6772616463686bULL));
  bool corrupted = options.corrupt_parameter.empty();
  const double h = options.step;
  for (ad::Parameter* p : params) {
    auto analytic = p->gradient.values();
    if (p->name == options.corrupt_parameter) {
      for (double& g : analytic) g += 1e-2 * (1.0 + std::abs(g));
      corrupted = true;
    }
    GradCheckEntry entry{p->name, 0, 0, 0, 0.0};
    auto values = p->value.values();
    for (std::size_t i : pick_entries(values.size(), options.max_entries, rng)) {
      const double saved = values[i];
      auto eval = [&](double offset, std::uint64_t& digest) {
        values[i] = saved + offset;
        ad::BranchTrace trace;
        const double v = batch_loss(model, ptrs, labels, prior_mean, options, nullptr);
        digest = trace.digest();
        return v;
      };
      // Central differences on a window free of ReLU/max switches. When the
      // window straddles one, use a second-order one-sided rule on the smooth
      // piece holding the base point, or shrink the step.
      double numeric = 0.0, step = h;
      bool smooth = false;
      for (int attempt = 0; attempt < 4 && !smooth; ++attempt, step /= 10.0) {
        std::uint64_t d_up = 0, d_down = 0, d_far = 0;
        const double up = eval(step, d_up);
        const double down = eval(-step, d_down);
        numeric = (up - down) / (2.0 * step);
        if (d_up == d_down) {
          smooth = true;
          break;
        }
        if (attempt == 0) ++entry.kinked;
        if (d_up == base_digest) {
          const double far = eval(2.0 * step, d_far);
          if (d_far == base_digest) {
            numeric = (-3.0 * base_loss + 4.0 * up - far) / (2.0 * step);
            smooth = true;
          }
        } else if (d_down == base_digest) {
          const double far = eval(-2.0 * step, d_far);
          if (d_far == base_digest) {
            numeric = (3.0 * base_loss - 4.0 * down + far) / (2.0 * step);
            smooth = true;
          }
        }
        if (smooth) break;
      }
      // Finite differences cannot resolve gradients whose size is within
      // rounding of the loss over the step; such entries agree trivially.
      const double resolution = 16.0 * std::numeric_limits<double>::epsilon() * std::abs(base_loss) / step;
      values[i] = saved;
      const double a = analytic[i];
      const double diff = std::abs(a - numeric);
      double rel = diff / std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (diff <= resolution && std::max(std::abs(a), std::abs(numeric)) * options.tolerance < resolution) {
        ++entry.at_resolution;
        rel = 0.0;
      }
      entry.max_rel_error = std::max(entry.max_rel_error, rel);
      ++entry.checked;
    }
    report.worst = std::max(report.worst, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  if (!corrupted) throw ConfigError("gradcheck: no trainable parameter named '" + options.corrupt_parameter + "'");
  report.passed = report.worst < options.tolerance;
  return report;
}

GradCheckReport gradient_check_toy(const ExperimentConfig& config, const GradCheckOptions& options) {
  ExperimentConfig cfg = config;
  cfg.model.joints = 5;
  cfg.model.num_classes = 2;
  cfg.model.in_channels = 3;
  // Boxes wider than the image keep the rendered values smooth in log_scale.
  cfg.render.truncation_sigmas = std::max(cfg.render.truncation_sigmas, 100.0);
  cfg.validate();

  SyntheticTaskSpec spec;
  spec.task = TaskKind::SpeedDiscrimination;
  spec.joints = 5;
  spec.frames = 16;
  spec.samples_per_class = 1;
  spec.noise_std = 0.01;
  spec.seed = options.seed;
  const auto seqs = generate_speed_task(spec);
  const auto samples = make_samples(seqs, cfg);

  cfg.train.seed = options.seed;
  Model model(cfg);
  // Move the learned topology and beta off their initial values so every
  // term of the loss carries gradient.
  Rng rng(derive_seed(options.seed, 0x746f79ULL));
  for (ad::Parameter* p : model.parameters()) {
    if (p->name.find("A_learn") != std::string::npos) {
      for (double& v : p->value.values()) v = rng.uniform(-0.5, 0.5);
    }
  }
  return gradient_check(model, samples, options);
}

}  // namespace kgs
