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

// The gated spatio-temporal graph-convolution classifier.
//
// Pipeline per mini-batch:
//   heatmaps = render(kinematics; log_scale)          [N*T, views, H, W]
//   F_vis    = visual_encode(heatmaps)                [N, C', T]
//   Z        = embed(positions)                       [N, C0, T, V]
//   per block: Y_gcn = BN(graph_conv_fused(Z))
//              Ỹ     = visual_gate(Y_gcn, F_vis) + Y_res
//              Z     = ReLU(ms_tcn(Ỹ))
//   logits   = FC(concat(GAP(Z), GAP(F_vis)))

#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kgs/autograd.hpp"
#include "kgs/optim.hpp"
#include "kgs/skeleton.hpp"
#include "kgs/splat.hpp"
#include "kgs/topology.hpp"

namespace kgs {

struct ModelConfig {
  std::size_t num_blocks = 4;
  std::vector<std::size_t> channels_per_stage{8, 16, 32};
  std::vector<std::size_t> stage_starts{1, 3, 4};  // 1-based first block of each stage
  std::vector<std::size_t> temporal_strides{1, 1, 2, 1};
  std::vector<std::size_t> dilations{1, 2, 3, 4};
  std::size_t num_classes = 2;
  std::size_t visual_dim = 16;
  double beta_init = 0.1;
  std::size_t num_subsets = 3;
  std::vector<std::pair<std::size_t, std::size_t>> physical_edges;  // empty: chain
  bool use_physical = true;
  std::size_t joints = 5;
  std::size_t in_channels = 3;

  /// 10 blocks, 64/128/256 channels, stride 2 at blocks 5 and 8, C' = 128.
  static ModelConfig full_scale();
  void validate() const;
  std::size_t block_channels(std::size_t block) const;  // 0-based block index
};

struct LossConfig {
  double lambda_base = 0.2;
  double lambda_ramp_epochs = 5;
  double lr_base = 0.05;
  double warmup_epochs = 10;
  std::vector<int> decay_epochs{40, 60};
  double decay_factor = 0.1;

  void validate() const;
};

/// Component switches; true disables the component.
struct Ablation {
  bool kgsm = false;  // isotropic covariances
  bool pt = false;    // beta frozen at 0, no topology loss
  bool vcg = false;   // gate multiplier fixed at 1
};

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  double momentum = 0.9;
  double weight_decay = 4e-4;
  bool nesterov = true;
};

struct ExperimentConfig {
  ModelConfig model;
  RenderConfig render;
  NormalizationParams normalization;
  LossConfig loss;
  TrainConfig train;
  Ablation ablation;

  void validate() const;
};

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const ExperimentConfig& config);
/// Applies a single ablation flag by name ("kgsm", "pt" or "vcg").
void apply_ablation(ExperimentConfig& config, std::string_view name);

/// lambda_base * min(1, t / ramp).
double lambda_schedule(int epoch, const LossConfig& loss = {});
/// Linear warm-up from 0, then decay_factor at each decay epoch.
double lr_schedule(int epoch, const LossConfig& loss = {});

/// One training/evaluation record: kinematics, its prior adjacency and label.
struct Sample {
  KinematicSequence kinematics;
  PriorAdjacency prior;
  int label = 0;
};

/// Normalises, differentiates and builds the prior with the configured
/// renderer (isotropic under the kgsm ablation).
Sample make_sample(const SkeletonSequence& seq, const ExperimentConfig& config);
std::vector<Sample> make_samples(std::span<const SkeletonSequence> seqs,
                                 const ExperimentConfig& config);

/// Fixed 0/1 physical adjacency split into `subsets` partitions (1 or 3).
/// With 3: self loops, edges toward the root (joint 0) and edges away.
std::vector<ad::Tensor> physical_adjacency(std::span<const std::pair<std::size_t, std::size_t>> edges,
                                           std::size_t joints, std::size_t subsets);

// ---- building blocks --------------------------------------------------

struct VisualEncoderVars {
  ad::Var conv1_w, conv1_b, norm1_gamma, norm1_beta;
  ad::BatchNormState* norm1 = nullptr;
  ad::Var conv2_w, conv2_b, norm2_gamma, norm2_beta;
  ad::BatchNormState* norm2 = nullptr;
  ad::Var proj_w, proj_b;
};

/// Per-frame CNN (two stride-2 3x3 convs, views->8->16, BN + ReLU), spatial
/// GAP and a linear projection to C'. heatmaps [N*T, views, H, W] -> [N, C', T].
ad::Var visual_encode(const ad::Var& heatmaps, std::size_t batch, const VisualEncoderVars& vars,
                      bool training);

/// G = sigmoid(W_g pool_T(F_vis) + b_g), shape [N, C_out, T_l].
ad::Var gate_coefficients(const ad::Var& f_vis, std::size_t time_len, const ad::Var& gate_w,
                          const ad::Var& gate_b);

/// Ỹ = Y_gcn ⊙ (1 + G) + Y_res with G broadcast over joints. Disabled
/// gating returns Y_gcn + Y_res.
ad::Var visual_gate(const ad::Var& y_gcn, const ad::Var& f_vis, const ad::Var& gate_w,
                    const ad::Var& gate_b, const ad::Var& y_res, bool enabled = true);

/// Y = Σ_k (A_phy^k + A_learn^k + β P_n) X W_k. `physical` may be empty to
/// drop A_phy; `weights` are [C_out, C_in] channel transforms.
ad::Var graph_conv_fused(const ad::Var& x, std::span<const ad::Tensor> physical,
                         std::span<const ad::Var> learned, const ad::Var& beta,
                         const ad::Tensor& priors, std::span<const ad::Var> weights);

struct TcnBranch {
  ad::Var reduce_w, reduce_b;  // [Cb, C, 1], [Cb] (bias optional)
  ad::Var norm_gamma, norm_beta;
  ad::BatchNormState* norm = nullptr;
  ad::Var temporal_w, temporal_b;  // [C, Cb, 3], [C]
  std::size_t dilation = 1;
};

/// Σ_k TConv_{d_k}(ReLU(BN(Conv1x1(Ỹ)))) + residual. The residual is Ỹ
/// itself when residual_w is undefined (stride 1 only), otherwise a
/// strided 1x1 convolution.
ad::Var ms_tcn(const ad::Var& y, std::span<const TcnBranch> branches, std::size_t stride,
               const ad::Var& residual_w, const ad::Var& residual_b, bool training);

// ---- model --------------------------------------------------------------

class Model {
 public:
  explicit Model(ExperimentConfig config);

  struct Output {
    ad::Var logits;                         // [N, K]
    std::vector<ad::Var> learned_topology;  // per block, sigmoid(sum_k A_learn^k)
    ad::Var visual;                         // F_vis [N, C', T]
  };
  Output forward(std::span<const Sample* const> batch, bool training);

  std::vector<ad::Parameter*> parameters();
  ad::Parameter& parameter(std::string_view name);
  std::vector<std::pair<std::string, ad::BatchNormState*>> norm_states();
  const ExperimentConfig& config() const { return config_; }
  std::size_t parameter_count() const;

  int epoch = 0;  // completed epochs

 private:
  struct Block {
    std::size_t in_channels = 0, out_channels = 0, stride = 1;
    std::vector<ad::Parameter*> gcn_w, a_learn;
    ad::Parameter* beta = nullptr;
    ad::Parameter *gcn_gamma = nullptr, *gcn_beta = nullptr;
    ad::BatchNormState* gcn_norm = nullptr;
    ad::Parameter *res_w = nullptr, *res_b = nullptr;
    ad::Parameter *gate_w = nullptr, *gate_b = nullptr;
    struct Branch {
      ad::Parameter *reduce_w, *gamma, *beta, *temporal_w, *temporal_b;
      ad::BatchNormState* norm;
      std::size_t dilation;
    };
    std::vector<Branch> branches;
    ad::Parameter *tres_w = nullptr, *tres_b = nullptr;
  };

  ad::Parameter* add_param(std::string name, ad::Tensor init);
  ad::BatchNormState* add_norm(std::string name, std::size_t channels);
  ad::Tensor uniform(ad::Shape shape, double bound);

  ExperimentConfig config_;
  std::deque<ad::Parameter> params_;
  std::deque<std::pair<std::string, ad::BatchNormState>> norms_;
  std::vector<ad::Tensor> physical_;
  std::uint64_t rng_state_;

  ad::Parameter* log_scale_ = nullptr;
  ad::Parameter *vis_c1w_, *vis_g1_, *vis_b1_, *vis_c2w_, *vis_g2_, *vis_b2_,
      *vis_pw_, *vis_pb_;
  ad::BatchNormState *vis_n1_, *vis_n2_;
  ad::Parameter *embed_w_, *embed_g_, *embed_beta_;
  ad::BatchNormState* embed_norm_;
  std::vector<Block> blocks_;
  ad::Parameter *head_w_, *head_b_;
};

// ---- loss and training ----------------------------------------------------

struct LossBreakdown {
  ad::Var total;
  double ce = 0.0;
  double topo = 0.0;
  double lambda = 0.0;
};

/// l_ce + lambda(t) * l_topo with l_topo = (1/L) Σ_l ||S_l - P̄||_F², P̄ the
/// batch-mean prior held constant.
LossBreakdown loss_total(const ad::Var& logits, std::span<const int> labels,
                         std::span<const ad::Var> learned_topology, const ad::Tensor& prior_mean,
                         int epoch, const LossConfig& loss, bool topo_enabled = true);

/// Mean of the per-sample priors, [V, V].
ad::Tensor batch_prior_mean(std::span<const Sample* const> batch);

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  double lambda = 0.0;
  double loss = 0.0;
  double loss_ce = 0.0;
  double loss_topo = 0.0;
  double accuracy = 0.0;
};

/// One seeded pass of forward, loss, gradients and SGD over shuffled
/// mini-batches. Increments model.epoch.
EpochMetrics train_epoch(Model& model, std::span<const Sample> data, int epoch);

std::vector<int> predict(Model& model, std::span<const Sample> data, std::size_t batch_size = 32);
/// Top-1 accuracy in evaluation mode.
double evaluate(Model& model, std::span<const Sample> data, std::size_t batch_size = 32);

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochMetrics& m);

void save_checkpoint(Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

// ---- gradient check ---------------------------------------------------

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  std::size_t max_entries = 6;  // per parameter tensor; smaller tensors are checked fully
  std::uint64_t seed = 0;
  int epoch = 5;  // lambda(5) = lambda_base keeps the topology term active
  /// Test hook: perturbs the analytic gradient of this parameter.
  std::string corrupt_parameter;
};

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  std::size_t kinked = 0;         // entries whose ±h window crossed a ReLU/max switch
  std::size_t at_resolution = 0;  // |analytic - numeric| within loss rounding / step
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst = 0.0;
  bool passed = false;
};

/// Central finite differences of loss_total against the tape gradients.
GradCheckReport gradient_check(Model& model, std::span<const Sample> batch,
                               const GradCheckOptions& options);

/// The acceptance toy: 4 blocks, 8/16/32 channels, V=5, T=16, K=2, one
/// sample per class from the speed task.
GradCheckReport gradient_check_toy(const ExperimentConfig& config, const GradCheckOptions& options);

}  // namespace kgs
