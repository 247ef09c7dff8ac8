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

// Dense f64 tensors with tape-based reverse-mode differentiation.
//
// Every op returns a Var whose node remembers its inputs and a closure that
// pushes the node's output gradient back into them. gradients() walks the
// tape in reverse topological order starting at a scalar loss.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kgs::ad {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_size(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  void fill(double v);
  Tensor reshaped(Shape shape) const;
  // Throws DataError naming `op` when any value is NaN or infinite.
  void check_finite(std::string_view op) const;

 private:
  Shape shape_;
  std::vector<double> values_;
};

/// A named learnable tensor with its gradient and momentum buffer. All three
/// share one shape for the lifetime of the parameter.
struct Parameter {
  Parameter(std::string name, Tensor init);

  std::string name;
  Tensor value;
  Tensor gradient;
  Tensor momentum;
  bool frozen = false;  // skipped by the optimizer
};

struct Node {
  Tensor value;
  Tensor grad;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
  Parameter* param = nullptr;
  bool requires_grad = false;

  // Lazily allocated, zero-initialised gradient accumulator.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t i) const { return node_->value.dim(i); }
  bool defined() const { return node_ != nullptr; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Tensor t);
Var leaf(Parameter& p);

/// Zeroes the gradient of every parameter in `params`, then accumulates
/// d(loss)/d(param) for those reachable from `loss`. Unreachable parameters
/// keep a zero gradient.
void gradients(const Var& loss, std::span<Parameter* const> params);

// ---- elementwise -------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);

/// Same values under a new shape of equal size.
Var reshape(const Var& a, Shape shape);

// ---- reductions --------------------------------------------------------
Var sum(const Var& a);
Var sum_squares(const Var& a);
/// [N, C, ...] -> [N, C], mean over all trailing axes.
Var mean_pool(const Var& x);

// ---- dense algebra -----------------------------------------------------
/// [m, k] x [k, n] -> [m, n].
Var matmul(const Var& a, const Var& b);
/// x [N, in], weight [out, in], optional bias [out] -> [N, out].
Var linear(const Var& x, const Var& weight, const Var& bias);
/// [N, p] ++ [N, q] -> [N, p + q].
Var concat(const Var& a, const Var& b);

// ---- convolutions ------------------------------------------------------
/// x [B, Ci, H, W], weight [Co, Ci, k, k], optional bias [Co]; zero padding.
Var conv2d(const Var& x, const Var& weight, const Var& bias, std::size_t stride,
           std::size_t padding);
/// Convolution along T of x [N, Ci, T, V] with weight [Co, Ci, K] (K odd),
/// "same" zero padding dilation*(K-1)/2, output length ceil(T / stride).
/// K = 1 gives the per-joint 1x1 channel transform.
Var temporal_conv(const Var& x, const Var& weight, const Var& bias,
                  std::size_t dilation, std::size_t stride);

// ---- normalisation -----------------------------------------------------
struct BatchNormState {
  explicit BatchNormState(std::size_t channels);
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-channel normalisation of x [N, C, ...] with learned gamma/beta [C].
/// Training mode uses batch statistics and updates the running averages;
/// evaluation mode uses the running averages.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta,
               BatchNormState& state, bool training);

// ---- classification ----------------------------------------------------
/// Row-wise softmax of [N, K].
Var softmax(const Var& logits);
/// Mean over rows of -log softmax(logits)[label]. Labels must lie in [0, K).
Var cross_entropy(const Var& logits, std::span<const int> labels);

// ---- graph / sequence helpers -----------------------------------------
/// y[n,c,t,i] = sum_j A(i,j) x[n,c,t,j] for x [N, C, T, V], A [V, V].
Var adjacency_apply(const Var& x, const Var& adjacency);
/// y[n,c,t,i] = beta * sum_j P_n(i,j) x[n,c,t,j] with a constant per-sample
/// adjacency stack P [N, V, V] and a scalar parameter beta [1].
Var prior_apply(const Var& x, const Var& beta, const Tensor& priors);
/// y = x * (1 + g) with x [N, C, T, V] and g [N, C, T] broadcast over V.
Var gate_modulate(const Var& x, const Var& gate);
/// Adaptive average pooling of x [N, C, T] to [N, C, target_len]; bin i
/// covers [floor(i*T/L), ceil((i+1)*T/L)).
Var time_pool(const Var& x, std::size_t target_len);
/// [N*T, C] (frame-major per sample) -> [N, C, T].
Var frames_to_sequence(const Var& x, std::size_t batch);

// ---- branch tracing -----------------------------------------------------
/// Fingerprint of the branch decisions (ReLU sides, max winners, clamps)
/// taken by forward passes on this thread while the trace is alive. Two
/// passes with equal digests evaluated the same smooth piece.
class BranchTrace {
 public:
  BranchTrace();
  ~BranchTrace();
  BranchTrace(const BranchTrace&) = delete;
  BranchTrace& operator=(const BranchTrace&) = delete;

  std::uint64_t digest() const { return digest_; }
  std::uint64_t decisions() const { return count_; }

  /// Innermost live trace on this thread, or nullptr.
  static BranchTrace* current();
  void record(bool taken) {
    digest_ = (digest_ ^ (taken ? 0x9eULL : 0x3dULL)) * 0x100000001b3ULL;
    ++count_;
  }

 private:
  BranchTrace* previous_;
  std::uint64_t digest_ = 0xcbf29ce484222325ULL;
  std::uint64_t count_ = 0;
};

}  // namespace kgs::ad
