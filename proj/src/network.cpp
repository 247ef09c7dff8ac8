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

#include "kgs/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "kgs/errors.hpp"
#include "kgs/random.hpp"

namespace kgs {

using ad::Shape;
using ad::Tensor;
using ad::Var;

Sample make_sample(const SkeletonSequence& seq, const ExperimentConfig& config) {
  if (!seq.label) throw DataError(seq.source + ": sample has no label");
  if (*seq.label < 0 || static_cast<std::size_t>(*seq.label) >= config.model.num_classes) {
    throw DataError(seq.source + ": label " + std::to_string(*seq.label) + " outside [0, " +
                    std::to_string(config.model.num_classes) + ")");
  }
  Sample s;
  s.kinematics = prepare_kinematics(seq, config.normalization);
  RenderConfig render = config.render;
  render.isotropic = render.isotropic || config.ablation.kgsm;
  const auto grids = build_primitive_grids(s.kinematics, render);
  s.prior = build_prior_adjacency(grids);
  s.prior.source = seq.source;
  s.label = *seq.label;
  return s;
}

std::vector<Sample> make_samples(std::span<const SkeletonSequence> seqs,
                                 const ExperimentConfig& config) {
  std::vector<Sample> out;
  out.reserve(seqs.size());
  for (const SkeletonSequence& s : seqs) out.push_back(make_sample(s, config));
  return out;
}

std::vector<Tensor> physical_adjacency(std::span<const std::pair<std::size_t, std::size_t>> edges,
                                       std::size_t joints, std::size_t subsets) {
  std::vector<std::pair<std::size_t, std::size_t>> chain;
  if (edges.empty()) {
    for (std::size_t v = 0; v + 1 < joints; ++v) chain.emplace_back(v, v + 1);
    edges = chain;
  }
  Tensor full({joints, joints});
  for (std::size_t v = 0; v < joints; ++v) full[v * joints + v] = 1.0;
  for (const auto& [a, b] : edges) {
    if (a >= joints || b >= joints) throw ConfigError("physical edge references a joint >= V");
    full[a * joints + b] = 1.0;
    full[b * joints + a] = 1.0;
  }
  if (subsets == 1) return {full};
  if (subsets != 3) throw ConfigError("physical adjacency supports 1 or 3 subsets");

  // Hop distance from the root, joint 0; unreachable joints count as far.
  std::vector<std::size_t> hop(joints, std::numeric_limits<std::size_t>::max());
  std::queue<std::size_t> frontier;
  hop[0] = 0;
  frontier.push(0);
  while (!frontier.empty()) {
    const std::size_t u = frontier.front();
    frontier.pop();
    for (std::size_t w = 0; w < joints; ++w) {
      if (w != u && full[u * joints + w] != 0.0 && hop[w] == std::numeric_limits<std::size_t>::max()) {
        hop[w] = hop[u] + 1;
        frontier.push(w);
      }
    }
  }
  Tensor self({joints, joints}), inward({joints, joints}), outward({joints, joints});
  for (std::size_t i = 0; i < joints; ++i)
    for (std::size_t j = 0; j < joints; ++j) {
      if (full[i * joints + j] == 0.0) continue;
      if (i == j) {
        self[i * joints + j] = 1.0;
      } else if (hop[j] < hop[i]) {
        inward[i * joints + j] = 1.0;  // neighbour closer to the root
      } else {
        outward[i * joints + j] = 1.0;
      }
    }
  return {self, inward, outward};
}

Var visual_encode(const Var& heatmaps, std::size_t batch, const VisualEncoderVars& p,
                  bool training) {
  if (heatmaps.value().rank() != 4) {
    throw DimensionError("visual_encode: expected [N*T, views, H, W], got " +
                         ad::shape_str(heatmaps.shape()));
  }
  if (heatmaps.dim(2) < 8 || heatmaps.dim(3) < 8) {
    throw ConfigError("visual_encode: heatmaps must be at least 8x8");
  }
  Var h = ad::conv2d(heatmaps, p.conv1_w, p.conv1_b, 2, 1);
  h = ad::relu(ad::batch_norm(h, p.norm1_gamma, p.norm1_beta, *p.norm1, training));
  h = ad::conv2d(h, p.conv2_w, p.conv2_b, 2, 1);
  h = ad::relu(ad::batch_norm(h, p.norm2_gamma, p.norm2_beta, *p.norm2, training));
  h = ad::mean_pool(h);
  h = ad::linear(h, p.proj_w, p.proj_b);
  return ad::frames_to_sequence(h, batch);
}

Var gate_coefficients(const Var& f_vis, std::size_t time_len, const Var& gate_w,
                      const Var& gate_b) {
  if (f_vis.value().rank() != 3) {
    throw DimensionError("visual_gate: F_vis must be [N, C', T], got " + ad::shape_str(f_vis.shape()));
  }
  const std::size_t n = f_vis.dim(0), cv = f_vis.dim(1);
  if (gate_w.value().rank() != 2 || gate_w.dim(1) != cv) {
    throw DimensionError("visual_gate: W_g " + ad::shape_str(gate_w.shape()) +
                         " does not accept C' = " + std::to_string(cv));
  }
  const std::size_t cout = gate_w.dim(0);
  Var f = f_vis.dim(2) == time_len ? f_vis : ad::time_pool(f_vis, time_len);
  f = ad::reshape(f, {n, cv, time_len, 1});
  Var g = ad::temporal_conv(f, ad::reshape(gate_w, {cout, cv, 1}), gate_b, 1, 1);
  return ad::sigmoid(ad::reshape(g, {n, cout, time_len}));
}

Var visual_gate(const Var& y_gcn, const Var& f_vis, const Var& gate_w, const Var& gate_b,
                const Var& y_res, bool enabled) {
  if (y_gcn.value().rank() != 4) {
    throw DimensionError("visual_gate: Y_gcn must be [N, C, T, V], got " + ad::shape_str(y_gcn.shape()));
  }
  if (gate_w.value().rank() != 2 || gate_w.dim(0) != y_gcn.dim(1)) {
    throw DimensionError("visual_gate: W_g " + ad::shape_str(gate_w.shape()) +
                         " does not produce C_out = " + std::to_string(y_gcn.dim(1)));
  }
  if (!enabled) return ad::add(y_gcn, y_res);
  const Var g = gate_coefficients(f_vis, y_gcn.dim(2), gate_w, gate_b);
  return ad::add(ad::gate_modulate(y_gcn, g), y_res);
}

Var graph_conv_fused(const Var& x, std::span<const Tensor> physical, std::span<const Var> learned,
                     const Var& beta, const Tensor& priors, std::span<const Var> weights) {
  if (x.value().rank() != 4) {
    throw DimensionError("graph_conv: X must be [N, C, T, V], got " + ad::shape_str(x.shape()));
  }
  const std::size_t subsets = weights.size();
  if (subsets == 0 || learned.size() != subsets || (!physical.empty() && physical.size() != subsets)) {
    throw DimensionError("graph_conv: subset counts of A_phy, A_learn and W_k differ");
  }
  const std::size_t v = x.dim(3);
  for (const Var& a : learned) {
    if (a.shape() != Shape{v, v}) {
      throw DimensionError("graph_conv: adjacency " + ad::shape_str(a.shape()) +
                           " does not match V = " + std::to_string(v));
    }
  }
  Var prior_term;
  if (beta.defined()) prior_term = ad::prior_apply(x, beta, priors);
  Var y;
  for (std::size_t k = 0; k < subsets; ++k) {
    Var adj = physical.empty() ? learned[k] : ad::add(ad::constant(physical[k]), learned[k]);
    Var z = ad::adjacency_apply(x, adj);
    if (prior_term.defined()) z = ad::add(z, prior_term);
    const Var& w = weights[k];
    if (w.value().rank() != 2 || w.dim(1) != x.dim(1)) {
      throw DimensionError("graph_conv: W_k " + ad::shape_str(w.shape()) + " does not accept C_in = " +
                           std::to_string(x.dim(1)));
    }
    Var out = ad::temporal_conv(z, ad::reshape(w, {w.dim(0), w.dim(1), 1}), Var(), 1, 1);
    y = y.defined() ? ad::add(y, out) : out;
  }
  return y;
}

Var ms_tcn(const Var& y, std::span<const TcnBranch> branches, std::size_t stride,
           const Var& residual_w, const Var& residual_b, bool training) {
  Var out;
  for (const TcnBranch& b : branches) {
    Var h = ad::temporal_conv(y, b.reduce_w, b.reduce_b, 1, 1);
    h = ad::relu(ad::batch_norm(h, b.norm_gamma, b.norm_beta, *b.norm, training));
    h = ad::temporal_conv(h, b.temporal_w, b.temporal_b, b.dilation, stride);
    out = out.defined() ? ad::add(out, h) : h;
  }
  Var residual;
  if (residual_w.defined()) {
    residual = ad::temporal_conv(y, residual_w, residual_b, 1, stride);
  } else {
    if (stride != 1) throw ConfigError("ms_tcn: identity residual requires stride 1");
    residual = y;
  }
  return out.defined() ? ad::add(out, residual) : residual;
}

// ---- Model ------------------------------------------------------------------

ad::Parameter* Model::add_param(std::string name, Tensor init) {
  params_.emplace_back(std::move(name), std::move(init));
  return &params_.back();
}

ad::BatchNormState* Model::add_norm(std::string name, std::size_t channels) {
  norms_.emplace_back(std::move(name), ad::BatchNormState(channels));
  return &norms_.back().second;
}

Tensor Model::uniform(Shape shape, double bound) {
  Tensor t(std::move(shape));
  Rng rng(rng_state_);
  rng_state_ = rng.next();
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

Model::Model(ExperimentConfig config) : config_(std::move(config)), rng_state_(0) {
  config_.validate();
  rng_state_ = derive_seed(config_.train.seed, 0x6d6f64656cULL);
  const ModelConfig& mc = config_.model;
  const std::size_t v = mc.joints;
  const std::size_t views = config_.render.views_for(mc.in_channels).size();
  const std::size_t cv = mc.visual_dim;
  auto kaiming = [](std::size_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); };
  auto ones = [](std::size_t n) { return Tensor({n}, 1.0); };
  auto zeros = [](std::size_t n) { return Tensor({n}, 0.0); };

  log_scale_ = add_param("render.log_scale", Tensor({1}, {config_.render.log_scale}));

  vis_c1w_ = add_param("visual.conv1.weight", uniform({8, views, 3, 3}, kaiming(views * 9)));
  vis_g1_ = add_param("visual.norm1.gamma", ones(8));
  vis_b1_ = add_param("visual.norm1.beta", zeros(8));
  vis_n1_ = add_norm("visual.norm1", 8);
  vis_c2w_ = add_param("visual.conv2.weight", uniform({16, 8, 3, 3}, kaiming(8 * 9)));
  vis_g2_ = add_param("visual.norm2.gamma", ones(16));
  vis_b2_ = add_param("visual.norm2.beta", zeros(16));
  vis_n2_ = add_norm("visual.norm2", 16);
  vis_pw_ = add_param("visual.proj.weight", uniform({cv, 16}, 1.0 / std::sqrt(16.0)));
  vis_pb_ = add_param("visual.proj.bias", zeros(cv));

  const std::size_t c0 = mc.block_channels(0);
  embed_w_ = add_param("embed.weight", uniform({c0, mc.in_channels, 1}, kaiming(mc.in_channels)));
  embed_g_ = add_param("embed.norm.gamma", ones(c0));
  embed_beta_ = add_param("embed.norm.beta", zeros(c0));
  embed_norm_ = add_norm("embed.norm", c0);

  if (mc.use_physical) physical_ = physical_adjacency(mc.physical_edges, v, mc.num_subsets);

  std::size_t in_ch = c0;
  for (std::size_t l = 0; l < mc.num_blocks; ++l) {
    const std::string pre = "block" + std::to_string(l + 1) + ".";
    Block b;
    b.in_channels = in_ch;
    b.out_channels = mc.block_channels(l);
    b.stride = mc.temporal_strides[l];
    const std::size_t co = b.out_channels;
    for (std::size_t k = 0; k < mc.num_subsets; ++k) {
      const std::string ks = std::to_string(k);
      b.gcn_w.push_back(add_param(pre + "gcn.W" + ks, uniform({co, in_ch}, kaiming(in_ch * mc.num_subsets))));
      b.a_learn.push_back(add_param(pre + "gcn.A_learn" + ks, Tensor({v, v}, 0.0)));
    }
    b.beta = add_param(pre + "gcn.beta", Tensor({1}, {config_.ablation.pt ? 0.0 : mc.beta_init}));
    b.beta->frozen = config_.ablation.pt;
    b.gcn_gamma = add_param(pre + "gcn.norm.gamma", ones(co));
    b.gcn_beta = add_param(pre + "gcn.norm.beta", zeros(co));
    b.gcn_norm = add_norm(pre + "gcn.norm", co);
    if (in_ch != co) {
      b.res_w = add_param(pre + "gcn.residual.weight", uniform({co, in_ch, 1}, kaiming(in_ch)));
      b.res_b = add_param(pre + "gcn.residual.bias", zeros(co));
    }
    b.gate_w = add_param(pre + "gate.W_g", uniform({co, cv}, 1.0 / std::sqrt(static_cast<double>(cv))));
    b.gate_b = add_param(pre + "gate.b_g", zeros(co));
    const std::size_t cb = std::max<std::size_t>(1, co / mc.dilations.size());
    for (std::size_t d = 0; d < mc.dilations.size(); ++d) {
      const std::string bp = pre + "tcn.branch" + std::to_string(d) + ".";
      Block::Branch br{};
      br.reduce_w = add_param(bp + "reduce.weight", uniform({cb, co, 1}, kaiming(co)));
      br.gamma = add_param(bp + "norm.gamma", ones(cb));
      br.beta = add_param(bp + "norm.beta", zeros(cb));
      br.norm = add_norm(bp + "norm", cb);
      br.temporal_w = add_param(bp + "temporal.weight", uniform({co, cb, 3}, kaiming(cb * 3)));
      br.temporal_b = add_param(bp + "temporal.bias", zeros(co));
      br.dilation = mc.dilations[d];
      b.branches.push_back(br);
    }
    if (b.stride != 1) {
      b.tres_w = add_param(pre + "tcn.residual.weight", uniform({co, co, 1}, kaiming(co)));
      b.tres_b = add_param(pre + "tcn.residual.bias", zeros(co));
    }
    blocks_.push_back(std::move(b));
    in_ch = co;
  }
  const std::size_t head_in = in_ch + cv;
  head_w_ = add_param("head.weight", uniform({mc.num_classes, head_in}, 1.0 / std::sqrt(static_cast<double>(head_in))));
  head_b_ = add_param("head.bias", zeros(mc.num_classes));
}

std::vector<ad::Parameter*> Model::parameters() {
  std::vector<ad::Parameter*> out;
  for (ad::Parameter& p : params_) out.push_back(&p);
  return out;
}

ad::Parameter& Model::parameter(std::string_view name) {
  for (ad::Parameter& p : params_) {
    if (p.name == name) return p;
  }
  throw ConfigError("model has no parameter '" + std::string(name) + "'");
}

std::vector<std::pair<std::string, ad::BatchNormState*>> Model::norm_states() {
  std::vector<std::pair<std::string, ad::BatchNormState*>> out;
  for (auto& [name, state] : norms_) out.emplace_back(name, &state);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const ad::Parameter& p : params_) n += p.value.size();
  return n;
}

Model::Output Model::forward(std::span<const Sample* const> batch, bool training) {
  if (batch.empty()) throw ConfigError("forward: empty batch");
  const ModelConfig& mc = config_.model;
  const std::size_t n = batch.size();
  const KinematicSequence& first = batch.front()->kinematics;
  const std::size_t t = first.frames, v = first.joints, c = first.channels;
  if (v != mc.joints || c != mc.in_channels) {
    throw DimensionError("forward: sample has V=" + std::to_string(v) + ", C=" + std::to_string(c) +
                         " but the model expects V=" + std::to_string(mc.joints) +
                         ", C=" + std::to_string(mc.in_channels));
  }

  Tensor x({n, c, t, v});
  Tensor priors({n, v, v});
  std::vector<const KinematicSequence*> kins;
  for (std::size_t b = 0; b < n; ++b) {
    const KinematicSequence& k = batch[b]->kinematics;
    if (k.frames != t || k.joints != v || k.channels != c) {
      throw DimensionError("forward: samples in a batch must share T, V and C");
    }
    if (batch[b]->prior.joints != v) throw DimensionError("forward: prior does not match V");
    kins.push_back(&k);
    for (std::size_t ti = 0; ti < t; ++ti)
      for (std::size_t vi = 0; vi < v; ++vi)
        for (std::size_t ci = 0; ci < c; ++ci)
          x[((b * c + ci) * t + ti) * v + vi] = k.positions[k.index(ti, vi, ci)];
    std::copy(batch[b]->prior.matrix.begin(), batch[b]->prior.matrix.end(),
              priors.data() + b * v * v);
  }

  RenderConfig render = config_.render;
  render.isotropic = render.isotropic || config_.ablation.kgsm;
  const Var heat = render_batch(ad::leaf(*log_scale_), kins, render);

  VisualEncoderVars vis{ad::leaf(*vis_c1w_), Var(), ad::leaf(*vis_g1_), ad::leaf(*vis_b1_),
                        vis_n1_,
                        ad::leaf(*vis_c2w_), Var(), ad::leaf(*vis_g2_), ad::leaf(*vis_b2_),
                        vis_n2_,
                        ad::leaf(*vis_pw_), ad::leaf(*vis_pb_)};
  Output out;
  out.visual = visual_encode(heat, n, vis, training);

  Var z = ad::temporal_conv(ad::constant(std::move(x)), ad::leaf(*embed_w_), Var(), 1, 1);
  z = ad::batch_norm(z, ad::leaf(*embed_g_), ad::leaf(*embed_beta_), *embed_norm_, training);

  for (Block& b : blocks_) {
    std::vector<Var> learned, weights;
    for (std::size_t k = 0; k < b.a_learn.size(); ++k) {
      learned.push_back(ad::leaf(*b.a_learn[k]));
      weights.push_back(ad::leaf(*b.gcn_w[k]));
    }
    Var y = graph_conv_fused(z, physical_, learned, ad::leaf(*b.beta), priors, weights);
    y = ad::batch_norm(y, ad::leaf(*b.gcn_gamma), ad::leaf(*b.gcn_beta), *b.gcn_norm, training);
    const Var res = b.res_w ? ad::temporal_conv(z, ad::leaf(*b.res_w), ad::leaf(*b.res_b), 1, 1) : z;
    const Var fused = visual_gate(y, out.visual, ad::leaf(*b.gate_w), ad::leaf(*b.gate_b), res,
                                  !config_.ablation.vcg);
    std::vector<TcnBranch> branches;
    for (const Block::Branch& br : b.branches) {
      branches.push_back({ad::leaf(*br.reduce_w), Var(), ad::leaf(*br.gamma),
                          ad::leaf(*br.beta), br.norm, ad::leaf(*br.temporal_w),
                          ad::leaf(*br.temporal_b), br.dilation});
    }
    const Var tres_w = b.tres_w ? ad::leaf(*b.tres_w) : Var();
    const Var tres_b = b.tres_b ? ad::leaf(*b.tres_b) : Var();
    z = ad::relu(ms_tcn(fused, branches, b.stride, tres_w, tres_b, training));

    Var summed;
    for (const Var& a : learned) summed = summed.defined() ? ad::add(summed, a) : a;
    out.learned_topology.push_back(ad::sigmoid(summed));
  }

  const Var pooled = ad::concat(ad::mean_pool(z), ad::mean_pool(out.visual));
  out.logits = ad::linear(pooled, ad::leaf(*head_w_), ad::leaf(*head_b_));
  return out;
}

}  // namespace kgs
