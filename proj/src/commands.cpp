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

#include "kgs/commands.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "kgs/errors.hpp"
#include "kgs/io.hpp"

namespace kgs {

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<Sample> load_samples(const std::filesystem::path& manifest, const ExperimentConfig& config) {
  const auto seqs = load_manifest(manifest);
  if (seqs.empty()) throw DataError(manifest.string() + ": no samples");
  for (const auto& s : seqs) {
    if (!s.label) throw DataError(s.source + ": sample without label");
    if (*s.label < 0 || static_cast<std::size_t>(*s.label) >= config.model.num_classes) {
      throw DataError(s.source + ": label " + std::to_string(*s.label) + " outside [0, " +
                      std::to_string(config.model.num_classes) + ")");
    }
    if (s.joints != config.model.joints || s.channels != config.model.in_channels) {
      throw DimensionError(s.source + ": sequence has V=" + std::to_string(s.joints) + ", C=" +
                           std::to_string(s.channels) + " but the model expects V=" +
                           std::to_string(config.model.joints) + ", C=" + std::to_string(config.model.in_channels));
    }
  }
  return make_samples(seqs, config);
}

}  // namespace

std::size_t cmd_render(const RenderOptions& o) {
  RunManifest manifest{"render", "", {o.input.string()}, o.out.string(), 0, {}};
  RenderConfig cfg;
  cfg.height = cfg.width = o.size;
  cfg.aggregation = parse_aggregation(o.aggregation);
  if (o.log_scale) cfg.log_scale = *o.log_scale;
  if (o.alpha) cfg.alpha = *o.alpha;
  cfg.isotropic = o.isotropic;
  cfg.validate();
  const auto seq = load_sequence(o.input);
  const auto kin = prepare_kinematics(seq);
  write_run_manifest(manifest, o.out);
  const auto result = render_sequence(kin, cfg);
  return write_heatmaps(result.heatmaps, o.out);
}

PriorAdjacency cmd_topology(const std::filesystem::path& input, const std::filesystem::path& out_csv) {
  const auto dir = out_csv.has_parent_path() ? out_csv.parent_path() : std::filesystem::path(".");
  const auto seq = load_sequence(input);
  const auto kin = prepare_kinematics(seq);
  write_run_manifest({"topology", "", {input.string()}, dir.string(), 0, {}}, dir);
  RenderConfig cfg;
  auto prior = build_prior_adjacency(build_primitive_grids(kin, cfg));
  prior.source = input.string();
  write_prior(prior, out_csv);
  return prior;
}

GradCheckReport cmd_gradcheck(const std::optional<std::filesystem::path>& config_path,
                              std::optional<std::uint64_t> seed, std::ostream& log,
                              const std::string& corrupt_parameter) {
  ExperimentConfig cfg = config_path ? load_config(*config_path) : ExperimentConfig{};
  GradCheckOptions opts;
  opts.seed = seed.value_or(cfg.train.seed);
  opts.corrupt_parameter = corrupt_parameter;
  const auto report = gradient_check_toy(cfg, opts);
  for (const auto& e : report.entries) {
    char line[160];
    std::snprintf(line, sizeof line, "%-36s checked=%-3zu kinked=%-2zu max_rel_error=%.3e\n", e.name.c_str(),
                  e.checked, e.kinked, e.max_rel_error);
    log << line;
  }
  char tail[96];
  std::snprintf(tail, sizeof tail, "worst=%.3e tolerance=%.1e %s\n", report.worst, opts.tolerance,
                report.passed ? "PASS" : "FAIL");
  log << tail;
  return report;
}

Model cmd_train(const TrainOptions& o, std::ostream& log) {
  ExperimentConfig cfg = load_config(o.config);
  apply_ablation(cfg, o.ablate);
  cfg.validate();
  const auto samples = load_samples(o.data, cfg);

  std::filesystem::create_directories(o.out);
  write_run_manifest({"train", o.config.string(), {o.data.string()}, o.out.string(), cfg.train.seed, {}}, o.out);

  const auto ckpt = o.out / "checkpoint.json";
  const auto metrics = o.out / "metrics.csv";
  Model model = [&] {
    if (!std::filesystem::exists(ckpt)) return Model(cfg);
    Model resumed = load_checkpoint(ckpt);
    ExperimentConfig saved = resumed.config();
    saved.train.epochs = cfg.train.epochs;
    if (serialize_config(saved) != serialize_config(cfg)) {
      throw ConfigError(ckpt.string() + ": checkpoint was trained with a different config");
    }
    log << "resuming from epoch " << resumed.epoch << "\n";
    return resumed;
  }();
  if (model.epoch == 0 || !std::filesystem::exists(metrics)) {
    std::ofstream(metrics, std::ios::trunc) << metrics_csv_header();
  }
  for (int epoch = model.epoch; epoch < static_cast<int>(cfg.train.epochs); ++epoch) {
    const EpochMetrics m = train_epoch(model, samples, epoch);
    std::ofstream(metrics, std::ios::app) << metrics_csv_row(m);
    save_checkpoint(model, ckpt);
    char line[160];
    std::snprintf(line, sizeof line, "epoch %d lr=%.4g lambda=%.3g ce=%.4f topo=%.4f acc=%.4f\n", m.epoch, m.lr,
                  m.lambda, m.loss_ce, m.loss_topo, m.accuracy);
    log << line;
  }
  return model;
}

double cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& data) {
  Model model = load_checkpoint(checkpoint);
  const auto samples = load_samples(data, model.config());
  return evaluate(model, samples);
}

std::filesystem::path cmd_synth(const std::string& task, const std::filesystem::path& out,
                                const std::optional<std::filesystem::path>& spec_path) {
  SyntheticTaskSpec spec = spec_path ? parse_task_spec(read_text(*spec_path)) : SyntheticTaskSpec{};
  if (!task.empty()) spec.task = parse_task(task);
  spec.validate();
  write_run_manifest({"synth", spec_path ? spec_path->string() : "", {}, out.string(), spec.seed, {}}, out);
  const auto seqs = generate_task(spec);
  return write_dataset(seqs, out, spec);
}

}  // namespace kgs
