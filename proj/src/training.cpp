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
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "kgs/errors.hpp"
#include "kgs/network.hpp"
#include "kgs/random.hpp"

namespace kgs {

using ad::Tensor;
using ad::Var;
using nlohmann::json;

LossBreakdown loss_total(const Var& logits, std::span<const int> labels,
                         std::span<const Var> learned_topology, const Tensor& prior_mean, int epoch,
                         const LossConfig& loss, bool topo_enabled) {
  LossBreakdown out;
  const Var ce = ad::cross_entropy(logits, labels);
  out.ce = ce.value()[0];
  out.lambda = lambda_schedule(epoch, loss);
  if (!topo_enabled || learned_topology.empty()) {
    out.total = ce;
    return out;
  }
  const Var target = ad::constant(prior_mean);
  Var topo;
  for (const Var& s : learned_topology) {
    if (s.shape() != prior_mean.shape()) {
      throw DimensionError("loss: learned topology " + ad::shape_str(s.shape()) +
                           " does not match prior " + ad::shape_str(prior_mean.shape()));
    }
    const Var term = ad::sum_squares(ad::sub(s, target));
    topo = topo.defined() ? ad::add(topo, term) : term;
  }
  topo = ad::scale(topo, 1.0 / static_cast<double>(learned_topology.size()));
  out.topo = topo.value()[0];
  out.total = ad::add(ce, ad::scale(topo, out.lambda));
  return out;
}

Tensor batch_prior_mean(std::span<const Sample* const> batch) {
  if (batch.empty()) throw ConfigError("prior mean of an empty batch");
  const std::size_t v = batch.front()->prior.joints;
  Tensor mean({v, v});
  for (const Sample* s : batch) {
    if (s->prior.joints != v) throw DimensionError("prior mean: samples disagree in V");
    for (std::size_t i = 0; i < v * v; ++i) mean[i] += s->prior.matrix[i];
  }
  for (double& x : mean.values()) x /= static_cast<double>(batch.size());
  return mean;
}

namespace {

std::vector<int> argmax_rows(const Tensor& logits) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = logits.data() + r * k;
    out[r] = static_cast<int>(std::max_element(row, row + k) - row);
  }
  return out;
}

}  // namespace

EpochMetrics train_epoch(Model& model, std::span<const Sample> data, int epoch) {
  if (data.empty()) throw ConfigError("train_epoch: empty dataset");
  const ExperimentConfig& cfg = model.config();
  EpochMetrics m;
  m.epoch = epoch;
  m.lr = lr_schedule(epoch, cfg.loss);
  m.lambda = lambda_schedule(epoch, cfg.loss);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(cfg.train.seed, 0x7368756666ULL + static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order);

  auto params = model.parameters();
  const ad::SgdOptions sgd{m.lr, cfg.train.momentum, cfg.train.weight_decay, cfg.train.nesterov};
  std::size_t correct = 0;
  double loss_sum = 0.0, ce_sum = 0.0, topo_sum = 0.0;
  for (std::size_t start = 0; start < order.size(); start += cfg.train.batch_size) {
    const std::size_t end = std::min(order.size(), start + cfg.train.batch_size);
    std::vector<const Sample*> batch;
    std::vector<int> labels;
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(&data[order[i]]);
      labels.push_back(data[order[i]].label);
    }
    const Model::Output out = model.forward(batch, true);
    const LossBreakdown loss = loss_total(out.logits, labels, out.learned_topology,
                                          batch_prior_mean(batch), epoch, cfg.loss, !cfg.ablation.pt);
    ad::gradients(loss.total, params);
    if (m.lr > 0.0) ad::sgd_step(params, sgd);

    const double w = static_cast<double>(batch.size());
    loss_sum += loss.total.value()[0] * w;
    ce_sum += loss.ce * w;
    topo_sum += loss.topo * w;
    const auto pred = argmax_rows(out.logits.value());
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i] ? 1 : 0;
  }
  const double total = static_cast<double>(data.size());
  m.loss = loss_sum / total;
  m.loss_ce = ce_sum / total;
  m.loss_topo = topo_sum / total;
  m.accuracy = static_cast<double>(correct) / total;
  model.epoch = epoch + 1;
  return m;
}

std::vector<int> predict(Model& model, std::span<const Sample> data, std::size_t batch_size) {
  std::vector<int> out;
  out.reserve(data.size());
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::vector<const Sample*> batch;
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) {
      batch.push_back(&data[i]);
    }
    const auto pred = argmax_rows(model.forward(batch, false).logits.value());
    out.insert(out.end(), pred.begin(), pred.end());
  }
  return out;
}

double evaluate(Model& model, std::span<const Sample> data, std::size_t batch_size) {
  if (data.empty()) throw ConfigError("evaluate: empty dataset");
  const auto pred = predict(model, data, batch_size);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) correct += pred[i] == data[i].label ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::string metrics_csv_header() { return "epoch,lr,lambda,loss_ce,loss_topo,accuracy\n"; }

std::string metrics_csv_row(const EpochMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", m.epoch, m.lr, m.lambda,
                m.loss_ce, m.loss_topo, m.accuracy);
  return buf;
}

namespace {

json tensor_json(const Tensor& t) {
  return {{"shape", t.shape()}, {"values", std::vector<double>(t.values().begin(), t.values().end())}};
}

void restore(Tensor& dst, const json& src, const std::string& what) {
  const auto shape = src.at("shape").get<ad::Shape>();
  if (shape != dst.shape()) {
    throw DimensionError("checkpoint: " + what + " has shape " + ad::shape_str(shape) +
                         ", model expects " + ad::shape_str(dst.shape()));
  }
  const auto values = src.at("values").get<std::vector<double>>();
  std::copy(values.begin(), values.end(), dst.values().begin());
}

}  // namespace

void save_checkpoint(Model& model, const std::filesystem::path& path) {
  json doc;
  doc["format"] = "kgsgcn-checkpoint-v1";
  doc["epoch"] = model.epoch;
  doc["config"] = json::parse(serialize_config(model.config()));
  json params = json::array();
  for (const ad::Parameter* p : model.parameters()) {
    params.push_back({{"name", p->name}, {"value", tensor_json(p->value)},
                      {"momentum", tensor_json(p->momentum)}});
  }
  doc["parameters"] = std::move(params);
  json norms = json::array();
  for (const auto& [name, state] : model.norm_states()) {
    norms.push_back({{"name", name}, {"running_mean", tensor_json(state->running_mean)},
                     {"running_var", tensor_json(state->running_var)}});
  }
  doc["buffers"] = std::move(norms);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw ConfigError(path.string() + ": cannot write checkpoint");
    out << doc.dump() << "\n";
  }
  std::filesystem::rename(tmp, path);
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open checkpoint");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (doc.value("format", "") != "kgsgcn-checkpoint-v1") {
    throw ParseError(path.string() + ": not a checkpoint file");
  }
  try {
    Model model(parse_config(doc.at("config").dump()));
    model.epoch = doc.at("epoch").get<int>();
    for (const json& p : doc.at("parameters")) {
      ad::Parameter& dst = model.parameter(p.at("name").get<std::string>());
      restore(dst.value, p.at("value"), dst.name);
      restore(dst.momentum, p.at("momentum"), dst.name + " momentum");
    }
    auto norms = model.norm_states();
    for (const json& b : doc.at("buffers")) {
      const auto name = b.at("name").get<std::string>();
      auto it = std::find_if(norms.begin(), norms.end(), [&](const auto& e) { return e.first == name; });
      if (it == norms.end()) throw ParseError("checkpoint: unknown buffer '" + name + "'");
      restore(it->second->running_mean, b.at("running_mean"), name + " running_mean");
      restore(it->second->running_var, b.at("running_var"), name + " running_var");
    }
    return model;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace kgs
