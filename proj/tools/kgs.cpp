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

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "kgs/commands.hpp"
#include "kgs/errors.hpp"

int main(int argc, char** argv) {
  CLI::App app{"kgs: kinematic Gaussian splatting skeleton classifier"};
  app.require_subcommand(1);

  kgs::RenderOptions render;
  double log_scale = 0.0, alpha = 0.0;
  auto* c_render = app.add_subcommand("render", "Render a sequence into per-view heatmaps");
  c_render->add_option("--input", render.input, "Sequence JSON file")->required();
  c_render->add_option("--out", render.out, "Output directory")->required();
  c_render->add_option("--size", render.size, "Heatmap side length")->capture_default_str();
  c_render->add_option("--agg", render.aggregation, "max|sum")->capture_default_str();
  auto* o_log_scale = c_render->add_option("--log-scale", log_scale, "Base log scale");
  auto* o_alpha = c_render->add_option("--alpha", alpha, "Anisotropy gain");
  c_render->add_flag("--isotropic", render.isotropic, "Ignore velocity in the covariance");

  std::string topo_input, topo_out;
  auto* c_topo = app.add_subcommand("topology", "Write the prior adjacency of a sequence as CSV");
  c_topo->add_option("--input", topo_input, "Sequence JSON file")->required();
  c_topo->add_option("--out", topo_out, "Output CSV path")->required();

  std::string gc_config;
  std::uint64_t gc_seed = 0;
  std::string gc_corrupt;
  auto* c_gc = app.add_subcommand("gradcheck", "Finite-difference check of the toy network");
  auto* o_gc_config = c_gc->add_option("--config", gc_config, "Experiment config JSON");
  auto* o_gc_seed = c_gc->add_option("--seed", gc_seed, "Seed");
  c_gc->add_option("--corrupt", gc_corrupt, "Perturb this parameter's gradient (self-test)")->group("");

  kgs::TrainOptions train;
  auto* c_train = app.add_subcommand("train", "Train a model");
  c_train->add_option("--config", train.config, "Experiment config JSON")->required();
  c_train->add_option("--data", train.data, "Dataset manifest")->required();
  c_train->add_option("--out", train.out, "Output directory")->required();
  c_train->add_option("--ablate", train.ablate, "kgsm|pt|vcg")
      ->check(CLI::IsMember({"kgsm", "pt", "vcg"}));

  std::string ev_ckpt, ev_data;
  auto* c_eval = app.add_subcommand("eval", "Top-1 accuracy of a checkpoint");
  c_eval->add_option("--checkpoint", ev_ckpt, "Checkpoint JSON")->required();
  c_eval->add_option("--data", ev_data, "Dataset manifest")->required();

  std::string sy_task, sy_out, sy_spec;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  c_synth->add_option("--task", sy_task, "speed_discrimination|correlation_topology|trajectory_classes")
      ->required();
  c_synth->add_option("--out", sy_out, "Output directory")->required();
  auto* o_sy_spec = c_synth->add_option("--spec", sy_spec, "Task spec JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (c_render->parsed()) {
      if (*o_log_scale) render.log_scale = log_scale;
      if (*o_alpha) render.alpha = alpha;
      std::cout << kgs::cmd_render(render) << " graymaps written to " << render.out.string() << "\n";
    } else if (c_topo->parsed()) {
      const auto prior = kgs::cmd_topology(topo_input, topo_out);
      std::cout << "V=" << prior.joints << " prior written to " << topo_out << "\n";
    } else if (c_gc->parsed()) {
      std::optional<std::filesystem::path> cfg;
      if (*o_gc_config) cfg = gc_config;
      std::optional<std::uint64_t> seed;
      if (*o_gc_seed) seed = gc_seed;
      const auto report = kgs::cmd_gradcheck(cfg, seed, std::cout, gc_corrupt);
      if (!report.passed) {
        std::cerr << "kgs gradcheck: max relative error " << report.worst << " exceeds tolerance\n";
        return 1;
      }
    } else if (c_train->parsed()) {
      kgs::cmd_train(train, std::cout);
    } else if (c_eval->parsed()) {
      std::printf("%.17g\n", kgs::cmd_eval(ev_ckpt, ev_data));
    } else if (c_synth->parsed()) {
      std::optional<std::filesystem::path> spec;
      if (*o_sy_spec) spec = sy_spec;
      std::cout << kgs::cmd_synth(sy_task, sy_out, spec).string() << "\n";
    }
  } catch (const kgs::Error& e) {
    std::cerr << "kgs " << app.get_subcommands().front()->get_name() << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "kgs " << app.get_subcommands().front()->get_name() << ": " << e.what() << "\n";
    return 3;
  }
  return 0;
}
