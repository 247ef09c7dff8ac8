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

#include "kgs/autograd.hpp"
#include "kgs/errors.hpp"

namespace kgs::ad {
namespace {

using NodePtr = std::shared_ptr<Node>;

Var make(Tensor value, std::initializer_list<Var> inputs, const char* op,
         std::function<void(Node&)> backward) {
  value.check_finite(op);
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const Var& v : inputs) {
    if (!v.defined()) continue;
    node->inputs.push_back(v.node());
    node->requires_grad = node->requires_grad || v.requires_grad();
  }
  if (node->requires_grad) node->backward = std::move(backward);
  return Var(std::move(node));
}

void expect_same(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void expect_rank(const Var& a, std::size_t rank, const char* op) {
  if (a.value().rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " +
                         std::to_string(rank) + ", got " + shape_str(a.shape()));
  }
}

bool wants(const NodePtr& n) { return n && n->requires_grad; }

template <typename F>
Var unary(const Var& a, const char* op, F f, auto df) {
  Tensor out(a.shape());
  const double* x = a.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  NodePtr an = a.node();
  return make(std::move(out), {a}, op, [an, df](Node& self) {
    double* g = an->grad_buffer().data();
    const double* gy = self.grad.data();
    const double* x = an->value.data();
    const double* y = self.value.data();
    for (std::size_t i = 0; i < self.value.size(); ++i) g[i] += gy[i] * df(x[i], y[i]);
  });
}

}  // namespace

Var add(const Var& a, const Var& b) {
  expect_same(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  NodePtr an = a.node(), bn = b.node();
  return make(std::move(out), {a, b}, "add", [an, bn](Node& self) {
    for (const NodePtr& n : {an, bn}) {
      if (!wants(n)) continue;
      double* g = n->grad_buffer().data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  expect_same(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  NodePtr an = a.node(), bn = b.node();
  return make(std::move(out), {a, b}, "sub", [an, bn](Node& self) {
    if (wants(an)) {
      double* g = an->grad_buffer().data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (wants(bn)) {
      double* g = bn->grad_buffer().data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  expect_same(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  NodePtr an = a.node(), bn = b.node();
  return make(std::move(out), {a, b}, "mul", [an, bn](Node& self) {
    if (wants(an)) {
      double* g = an->grad_buffer().data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bn->value[i];
    }
    if (wants(bn)) {
      double* g = bn->grad_buffer().data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * an->value[i];
    }
  });
}

Var scale(const Var& a, double c) {
  return unary(
      a, "scale", [c](double x) { return c * x; },
      [c](double, double) { return c; });
}

Var tanh(const Var& a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
  return unary(
      a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var relu(const Var& a) {
  if (BranchTrace* trace = BranchTrace::current()) {
    for (double x : a.value().values()) trace->record(x > 0.0);
  }
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  NodePtr an = a.node();
  return make(std::move(out), {a}, "reshape", [an](Node& self) {
    double* g = an->grad_buffer().data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  NodePtr an = a.node();
  return make(Tensor({1}, {s}), {a}, "sum", [an](Node& self) {
    double* g = an->grad_buffer().data();
    for (std::size_t i = 0; i < an->value.size(); ++i) g[i] += self.grad[0];
  });
}

Var sum_squares(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v * v;
  NodePtr an = a.node();
  return make(Tensor({1}, {s}), {a}, "sum_squares", [an](Node& self) {
    double* g = an->grad_buffer().data();
    for (std::size_t i = 0; i < an->value.size(); ++i) {
      g[i] += 2.0 * an->value[i] * self.grad[0];
    }
  });
}

Var mean_pool(const Var& x) {
  if (x.value().rank() < 2) {
    throw DimensionError("mean_pool: expected rank >= 2, got " + shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0), c = x.dim(1);
  const std::size_t inner = x.value().size() / (n * c);
  Tensor out({n, c});
  const double* xv = x.value().data();
  for (std::size_t r = 0; r < n * c; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < inner; ++k) s += xv[r * inner + k];
    out[r] = s / static_cast<double>(inner);
  }
  NodePtr xn = x.node();
  return make(std::move(out), {x}, "mean_pool", [xn, inner](Node& self) {
    double* g = xn->grad_buffer().data();
    const double inv = 1.0 / static_cast<double>(inner);
    for (std::size_t r = 0; r < self.grad.size(); ++r) {
      const double gr = self.grad[r] * inv;
      for (std::size_t k = 0; k < inner; ++k) g[r * inner + k] += gr;
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  expect_rank(a, 2, "matmul");
  expect_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner extents differ " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  Tensor out({m, n});
  const double* av = a.value().data();
  const double* bv = b.value().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
    }
  }
  NodePtr an = a.node(), bn = b.node();
  return make(std::move(out), {a, b}, "matmul", [an, bn, m, k, n](Node& self) {
    const double* gy = self.grad.data();
    if (wants(an)) {
      double* ga = an->grad_buffer().data();
      const double* bv = bn->value.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += gy[i * n + j] * bv[p * n + j];
          ga[i * k + p] += s;
        }
    }
    if (wants(bn)) {
      double* gb = bn->grad_buffer().data();
      const double* av = an->value.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * gy[i * n + j];
        }
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  expect_rank(x, 2, "linear");
  expect_rank(weight, 2, "linear");
  const std::size_t rows = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  if (weight.dim(1) != in) {
    throw DimensionError("linear: input " + shape_str(x.shape()) +
                         " does not match weight " + shape_str(weight.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{out_dim}) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) +
                         " does not match weight " + shape_str(weight.shape()));
  }
  Tensor out({rows, out_dim});
  const double* xv = x.value().data();
  const double* wv = weight.value().data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < out_dim; ++o) {
      double s = bias.defined() ? bias.value()[o] : 0.0;
      for (std::size_t i = 0; i < in; ++i) s += wv[o * in + i] * xv[r * in + i];
      out[r * out_dim + o] = s;
    }
  NodePtr xn = x.node(), wn = weight.node(), bn = bias.node();
  return make(std::move(out), {x, weight, bias}, "linear",
              [xn, wn, bn, rows, in, out_dim](Node& self) {
                const double* gy = self.grad.data();
                const double* xv = xn->value.data();
                const double* wv = wn->value.data();
                double* gx = wants(xn) ? xn->grad_buffer().data() : nullptr;
                double* gw = wants(wn) ? wn->grad_buffer().data() : nullptr;
                double* gb = wants(bn) ? bn->grad_buffer().data() : nullptr;
                for (std::size_t r = 0; r < rows; ++r)
                  for (std::size_t o = 0; o < out_dim; ++o) {
                    const double g = gy[r * out_dim + o];
                    if (gb) gb[o] += g;
                    for (std::size_t i = 0; i < in; ++i) {
                      if (gx) gx[r * in + i] += g * wv[o * in + i];
                      if (gw) gw[o * in + i] += g * xv[r * in + i];
                    }
                  }
              });
}

Var concat(const Var& a, const Var& b) {
  expect_rank(a, 2, "concat");
  expect_rank(b, 2, "concat");
  if (a.dim(0) != b.dim(0)) {
    throw DimensionError("concat: row counts differ " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0), p = a.dim(1), q = b.dim(1);
  Tensor out({n, p + q});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < p; ++i) out[r * (p + q) + i] = a.value()[r * p + i];
    for (std::size_t i = 0; i < q; ++i) out[r * (p + q) + p + i] = b.value()[r * q + i];
  }
  NodePtr an = a.node(), bn = b.node();
  return make(std::move(out), {a, b}, "concat", [an, bn, n, p, q](Node& self) {
    for (std::size_t r = 0; r < n; ++r) {
      if (wants(an))
        for (std::size_t i = 0; i < p; ++i)
          an->grad_buffer()[r * p + i] += self.grad[r * (p + q) + i];
      if (wants(bn))
        for (std::size_t i = 0; i < q; ++i)
          bn->grad_buffer()[r * q + i] += self.grad[r * (p + q) + p + i];
    }
  });
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, std::size_t stride,
           std::size_t padding) {
  expect_rank(x, 4, "conv2d");
  expect_rank(weight, 4, "conv2d");
  const std::size_t batch = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t co = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != ci) {
    throw DimensionError("conv2d: input " + shape_str(x.shape()) +
                         " does not match weight " + shape_str(weight.shape()));
  }
  if (stride == 0) throw ConfigError("conv2d: stride must be >= 1");
  if (h + 2 * padding < kh || w + 2 * padding < kw) {
    throw DimensionError("conv2d: kernel larger than padded input " + shape_str(x.shape()));
  }
  const std::size_t ho = (h + 2 * padding - kh) / stride + 1;
  const std::size_t wo = (w + 2 * padding - kw) / stride + 1;
  Tensor out({batch, co, ho, wo});
  const double* xv = x.value().data();
  const double* wv = weight.value().data();
  const auto pad = static_cast<std::ptrdiff_t>(padding);
  // Calls fn(out_row, in_row, widx, ox_lo, ox_hi) for every in-bounds row of taps;
  // columns ox in [ox_lo, ox_hi) read input column ox * stride + kx - padding.
  auto for_each_row = [=](auto&& fn) {
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t o = 0; o < co; ++o)
        for (std::size_t i = 0; i < ci; ++i)
          for (std::size_t ky = 0; ky < kh; ++ky)
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::size_t widx = ((o * ci + i) * kh + ky) * kw + kx;
              std::size_t ox_lo = 0;
              while (ox_lo < wo && ox_lo * stride + kx < padding) ++ox_lo;
              std::size_t ox_hi = ox_lo;
              while (ox_hi < wo && ox_hi * stride + kx < w + padding) ++ox_hi;
              if (ox_lo == ox_hi) continue;
              for (std::size_t oy = 0; oy < ho; ++oy) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - pad;
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                const std::size_t orow = ((b * co + o) * ho + oy) * wo;
                // Offset such that input column = in_row + ox * stride.
                const std::size_t irow = ((b * ci + i) * h + static_cast<std::size_t>(iy)) * w +
                                         kx - padding;
                fn(orow, irow, widx, ox_lo, ox_hi);
              }
            }
  };
  double* yv = out.data();
  for_each_row([&](std::size_t orow, std::size_t irow, std::size_t wi, std::size_t lo,
                   std::size_t hi) {
    const double wt = wv[wi];
    for (std::size_t ox = lo; ox < hi; ++ox) yv[orow + ox] += wt * xv[irow + ox * stride];
  });
  if (bias.defined()) {
    const std::size_t plane = ho * wo;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t o = 0; o < co; ++o)
        for (std::size_t k = 0; k < plane; ++k) yv[(b * co + o) * plane + k] += bias.value()[o];
  }
  NodePtr xn = x.node(), wn = weight.node(), bn = bias.node();
  return make(std::move(out), {x, weight, bias}, "conv2d",
              [xn, wn, bn, for_each_row, batch, co, ho, wo, stride](Node& self) {
                const double* gy = self.grad.data();
                const double* xv = xn->value.data();
                const double* wv = wn->value.data();
                if (wants(xn)) {
                  double* gx = xn->grad_buffer().data();
                  for_each_row([&](std::size_t orow, std::size_t irow, std::size_t wi,
                                   std::size_t lo, std::size_t hi) {
                    const double wt = wv[wi];
                    for (std::size_t ox = lo; ox < hi; ++ox)
                      gx[irow + ox * stride] += wt * gy[orow + ox];
                  });
                }
                if (wants(wn)) {
                  double* gw = wn->grad_buffer().data();
                  for_each_row([&](std::size_t orow, std::size_t irow, std::size_t wi,
                                   std::size_t lo, std::size_t hi) {
                    double acc = 0.0;
                    for (std::size_t ox = lo; ox < hi; ++ox)
                      acc += xv[irow + ox * stride] * gy[orow + ox];
                    gw[wi] += acc;
                  });
                }
                if (wants(bn)) {
                  double* gb = bn->grad_buffer().data();
                  const std::size_t plane = ho * wo;
                  for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t o = 0; o < co; ++o)
                      for (std::size_t k = 0; k < plane; ++k) gb[o] += gy[(b * co + o) * plane + k];
                }
              });
}

Var temporal_conv(const Var& x, const Var& weight, const Var& bias,
                  std::size_t dilation, std::size_t stride) {
  expect_rank(x, 4, "temporal_conv");
  expect_rank(weight, 3, "temporal_conv");
  const std::size_t n = x.dim(0), ci = x.dim(1), t = x.dim(2), v = x.dim(3);
  const std::size_t co = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != ci) {
    throw DimensionError("temporal_conv: input " + shape_str(x.shape()) +
                         " does not match weight " + shape_str(weight.shape()));
  }
  if (k % 2 == 0) throw ConfigError("temporal_conv: kernel length must be odd");
  if (stride == 0 || dilation == 0) {
    throw ConfigError("temporal_conv: stride and dilation must be >= 1");
  }
  if (bias.defined() && bias.shape() != Shape{co}) {
    throw DimensionError("temporal_conv: bias " + shape_str(bias.shape()) +
                         " does not match weight " + shape_str(weight.shape()));
  }
  const auto pad = static_cast<std::ptrdiff_t>(dilation * (k - 1) / 2);
  const std::size_t to = (t + stride - 1) / stride;
  Tensor out({n, co, to, v});

  // For each (sample, out-ch, in-ch, tap) the valid output frames form a
  // contiguous range, so the inner loop runs over whole V-rows.
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t o = 0; o < co; ++o)
        for (std::size_t i = 0; i < ci; ++i)
          for (std::size_t kk = 0; kk < k; ++kk) {
            const std::size_t widx = (o * ci + i) * k + kk;
            const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kk * dilation) - pad;
            const std::size_t obase = (b * co + o) * to * v;
            const std::size_t ibase = (b * ci + i) * t * v;
            for (std::size_t ot = 0; ot < to; ++ot) {
              const std::ptrdiff_t it = static_cast<std::ptrdiff_t>(ot * stride) + shift;
              if (it < 0 || it >= static_cast<std::ptrdiff_t>(t)) continue;
              fn(obase + ot * v, ibase + static_cast<std::size_t>(it) * v, widx, v);
            }
          }
  };
  double* yv = out.data();
  const double* xv = x.value().data();
  const double* wv = weight.value().data();
  for_each_tap([&](std::size_t oo, std::size_t io, std::size_t wi, std::size_t len) {
    const double wk = wv[wi];
    for (std::size_t j = 0; j < len; ++j) yv[oo + j] += wk * xv[io + j];
  });
  if (bias.defined()) {
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t o = 0; o < co; ++o)
        for (std::size_t j = 0; j < to * v; ++j) yv[(b * co + o) * to * v + j] += bias.value()[o];
  }
  NodePtr xn = x.node(), wn = weight.node(), bn = bias.node();
  return make(std::move(out), {x, weight, bias}, "temporal_conv",
              [xn, wn, bn, for_each_tap, n, co, to, v](Node& self) {
                const double* gy = self.grad.data();
                const double* xv = xn->value.data();
                const double* wv = wn->value.data();
                double* gx = wants(xn) ? xn->grad_buffer().data() : nullptr;
                double* gw = wants(wn) ? wn->grad_buffer().data() : nullptr;
                if (gx || gw) {
                  for_each_tap([&](std::size_t oo, std::size_t io, std::size_t wi, std::size_t len) {
                    if (gx) {
                      const double wk = wv[wi];
                      for (std::size_t j = 0; j < len; ++j) gx[io + j] += wk * gy[oo + j];
                    }
                    if (gw) {
                      double s = 0.0;
                      for (std::size_t j = 0; j < len; ++j) s += xv[io + j] * gy[oo + j];
                      gw[wi] += s;
                    }
                  });
                }
                if (wants(bn)) {
                  double* gb = bn->grad_buffer().data();
                  for (std::size_t b = 0; b < n; ++b)
                    for (std::size_t o = 0; o < co; ++o)
                      for (std::size_t j = 0; j < to * v; ++j) gb[o] += gy[(b * co + o) * to * v + j];
                }
              });
}

BatchNormState::BatchNormState(std::size_t channels)
    : running_mean({channels}, 0.0), running_var({channels}, 1.0) {}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta,
               BatchNormState& state, bool training) {
  if (x.value().rank() < 2) {
    throw DimensionError("batch_norm: expected rank >= 2, got " + shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0), c = x.dim(1);
  const std::size_t inner = x.value().size() / (n * c);
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    throw DimensionError("batch_norm: affine shapes " + shape_str(gamma.shape()) + "/" +
                         shape_str(beta.shape()) + " do not match input " +
                         shape_str(x.shape()));
  }
  const double count = static_cast<double>(n * inner);
  const double* xv = x.value().data();
  auto at = [inner, c](std::size_t b, std::size_t ch, std::size_t k) {
    return (b * c + ch) * inner + k;
  };
  Tensor mean({c}), inv_std({c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    double m, var;
    if (training) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t k = 0; k < inner; ++k) s += xv[at(b, ch, k)];
      m = s / count;
      double ss = 0.0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t k = 0; k < inner; ++k) {
          const double d = xv[at(b, ch, k)] - m;
          ss += d * d;
        }
      var = ss / count;
      const double unbiased = count > 1.0 ? ss / (count - 1.0) : var;
      state.running_mean[ch] = (1.0 - state.momentum) * state.running_mean[ch] + state.momentum * m;
      state.running_var[ch] = (1.0 - state.momentum) * state.running_var[ch] + state.momentum * unbiased;
    } else {
      m = state.running_mean[ch];
      var = state.running_var[ch];
    }
    mean[ch] = m;
    inv_std[ch] = 1.0 / std::sqrt(var + state.eps);
  }
  Tensor out(x.shape());
  Tensor xhat(x.shape());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t k = 0; k < inner; ++k) {
        const std::size_t idx = at(b, ch, k);
        xhat[idx] = (xv[idx] - mean[ch]) * inv_std[ch];
        out[idx] = gamma.value()[ch] * xhat[idx] + beta.value()[ch];
      }
  NodePtr xn = x.node(), gn = gamma.node(), bn = beta.node();
  return make(std::move(out), {x, gamma, beta}, "batch_norm",
              [xn, gn, bn, xhat = std::move(xhat), inv_std, n, c, inner, count,
               training](Node& self) {
                const double* gy = self.grad.data();
                auto at = [inner, c](std::size_t b, std::size_t ch, std::size_t k) {
                  return (b * c + ch) * inner + k;
                };
                for (std::size_t ch = 0; ch < c; ++ch) {
                  double sum_g = 0.0, sum_gx = 0.0;
                  for (std::size_t b = 0; b < n; ++b)
                    for (std::size_t k = 0; k < inner; ++k) {
                      const std::size_t idx = at(b, ch, k);
                      sum_g += gy[idx];
                      sum_gx += gy[idx] * xhat[idx];
                    }
                  if (wants(gn)) gn->grad_buffer()[ch] += sum_gx;
                  if (wants(bn)) bn->grad_buffer()[ch] += sum_g;
                  if (!wants(xn)) continue;
                  double* gx = xn->grad_buffer().data();
                  const double scale_ch = gn->value[ch] * inv_std[ch];
                  for (std::size_t b = 0; b < n; ++b)
                    for (std::size_t k = 0; k < inner; ++k) {
                      const std::size_t idx = at(b, ch, k);
                      if (training) {
                        gx[idx] += scale_ch * (gy[idx] - sum_g / count -
                                               xhat[idx] * sum_gx / count);
                      } else {
                        gx[idx] += scale_ch * gy[idx];
                      }
                    }
                }
              });
}

Var softmax(const Var& logits) {
  expect_rank(logits, 2, "softmax");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor out({n, k});
  for (std::size_t r = 0; r < n; ++r) {
    const double* z = logits.value().data() + r * k;
    const double zmax = *std::max_element(z, z + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += (out[r * k + j] = std::exp(z[j] - zmax));
    for (std::size_t j = 0; j < k; ++j) out[r * k + j] /= s;
  }
  NodePtr ln = logits.node();
  return make(std::move(out), {logits}, "softmax", [ln, n, k](Node& self) {
    double* g = ln->grad_buffer().data();
    for (std::size_t r = 0; r < n; ++r) {
      const double* p = self.value.data() + r * k;
      const double* gy = self.grad.data() + r * k;
      double dot = 0.0;
      for (std::size_t j = 0; j < k; ++j) dot += gy[j] * p[j];
      for (std::size_t j = 0; j < k; ++j) g[r * k + j] += p[j] * (gy[j] - dot);
    }
  });
}

Var cross_entropy(const Var& logits, std::span<const int> labels) {
  expect_rank(logits, 2, "cross_entropy");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) +
                         " labels for logits " + shape_str(logits.shape()));
  }
  Tensor probs({n, k});
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= k) {
      throw DataError("cross_entropy: label " + std::to_string(labels[r]) +
                      " outside [0, " + std::to_string(k) + ")");
    }
    const double* z = logits.value().data() + r * k;
    const double zmax = *std::max_element(z, z + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(z[j] - zmax);
    const double log_norm = zmax + std::log(s);
    for (std::size_t j = 0; j < k; ++j) probs[r * k + j] = std::exp(z[j] - log_norm);
    loss += log_norm - z[labels[r]];
  }
  loss /= static_cast<double>(n);
  NodePtr ln = logits.node();
  std::vector<int> lab(labels.begin(), labels.end());
  return make(Tensor({1}, {loss}), {logits}, "cross_entropy",
              [ln, probs = std::move(probs), lab = std::move(lab), n, k](Node& self) {
                double* g = ln->grad_buffer().data();
                const double scale = self.grad[0] / static_cast<double>(n);
                for (std::size_t r = 0; r < n; ++r)
                  for (std::size_t j = 0; j < k; ++j) {
                    const double onehot = static_cast<int>(j) == lab[r] ? 1.0 : 0.0;
                    g[r * k + j] += scale * (probs[r * k + j] - onehot);
                  }
              });
}

Var adjacency_apply(const Var& x, const Var& adjacency) {
  expect_rank(x, 4, "adjacency_apply");
  const std::size_t v = x.dim(3);
  if (adjacency.shape() != Shape{v, v}) {
    throw DimensionError("adjacency_apply: adjacency " + shape_str(adjacency.shape()) +
                         " does not match features " + shape_str(x.shape()));
  }
  const std::size_t rows = x.value().size() / v;
  Tensor out(x.shape());
  const double* xv = x.value().data();
  const double* a = adjacency.value().data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < v; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < v; ++j) s += a[i * v + j] * xv[r * v + j];
      out[r * v + i] = s;
    }
  NodePtr xn = x.node(), an = adjacency.node();
  return make(std::move(out), {x, adjacency}, "adjacency_apply", [xn, an, rows, v](Node& self) {
    const double* gy = self.grad.data();
    if (wants(xn)) {
      double* gx = xn->grad_buffer().data();
      const double* a = an->value.data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < v; ++i)
          for (std::size_t j = 0; j < v; ++j) gx[r * v + j] += a[i * v + j] * gy[r * v + i];
    }
    if (wants(an)) {
      double* ga = an->grad_buffer().data();
      const double* xv = xn->value.data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < v; ++i)
          for (std::size_t j = 0; j < v; ++j) ga[i * v + j] += gy[r * v + i] * xv[r * v + j];
    }
  });
}

Var prior_apply(const Var& x, const Var& beta, const Tensor& priors) {
  expect_rank(x, 4, "prior_apply");
  const std::size_t n = x.dim(0), v = x.dim(3);
  if (priors.shape() != Shape{n, v, v}) {
    throw DimensionError("prior_apply: priors " + shape_str(priors.shape()) +
                         " do not match features " + shape_str(x.shape()));
  }
  if (beta.shape() != Shape{1}) {
    throw DimensionError("prior_apply: beta must be a scalar, got " + shape_str(beta.shape()));
  }
  const std::size_t rows_per = x.value().size() / (n * v);
  // Unscaled aggregation P_n x, kept for the beta gradient.
  Tensor agg(x.shape());
  const double* xv = x.value().data();
  for (std::size_t b = 0; b < n; ++b) {
    const double* p = priors.data() + b * v * v;
    for (std::size_t r = 0; r < rows_per; ++r) {
      const std::size_t base = (b * rows_per + r) * v;
      for (std::size_t i = 0; i < v; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < v; ++j) s += p[i * v + j] * xv[base + j];
        agg[base + i] = s;
      }
    }
  }
  const double bval = beta.value()[0];
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = bval * agg[i];
  NodePtr xn = x.node(), btn = beta.node();
  return make(std::move(out), {x, beta}, "prior_apply",
              [xn, btn, priors, agg = std::move(agg), n, v, rows_per](Node& self) {
                const double* gy = self.grad.data();
                const double bval = btn->value[0];
                if (wants(btn)) {
                  double s = 0.0;
                  for (std::size_t i = 0; i < agg.size(); ++i) s += gy[i] * agg[i];
                  btn->grad_buffer()[0] += s;
                }
                if (wants(xn)) {
                  double* gx = xn->grad_buffer().data();
                  for (std::size_t b = 0; b < n; ++b) {
                    const double* p = priors.data() + b * v * v;
                    for (std::size_t r = 0; r < rows_per; ++r) {
                      const std::size_t base = (b * rows_per + r) * v;
                      for (std::size_t i = 0; i < v; ++i)
                        for (std::size_t j = 0; j < v; ++j)
                          gx[base + j] += bval * p[i * v + j] * gy[base + i];
                    }
                  }
                }
              });
}

Var gate_modulate(const Var& x, const Var& gate) {
  expect_rank(x, 4, "gate_modulate");
  expect_rank(gate, 3, "gate_modulate");
  const std::size_t n = x.dim(0), c = x.dim(1), t = x.dim(2), v = x.dim(3);
  if (gate.shape() != Shape{n, c, t}) {
    throw DimensionError("gate_modulate: gate " + shape_str(gate.shape()) +
                         " does not match features " + shape_str(x.shape()));
  }
  Tensor out(x.shape());
  const double* xv = x.value().data();
  const double* gv = gate.value().data();
  for (std::size_t r = 0; r < n * c * t; ++r)
    for (std::size_t j = 0; j < v; ++j) out[r * v + j] = xv[r * v + j] * (1.0 + gv[r]);
  NodePtr xn = x.node(), gn = gate.node();
  return make(std::move(out), {x, gate}, "gate_modulate", [xn, gn, n, c, t, v](Node& self) {
    const double* gy = self.grad.data();
    const double* xv = xn->value.data();
    const double* gv = gn->value.data();
    double* gx = wants(xn) ? xn->grad_buffer().data() : nullptr;
    double* gg = wants(gn) ? gn->grad_buffer().data() : nullptr;
    for (std::size_t r = 0; r < n * c * t; ++r)
      for (std::size_t j = 0; j < v; ++j) {
        if (gx) gx[r * v + j] += gy[r * v + j] * (1.0 + gv[r]);
        if (gg) gg[r] += gy[r * v + j] * xv[r * v + j];
      }
  });
}

Var time_pool(const Var& x, std::size_t target_len) {
  expect_rank(x, 3, "time_pool");
  const std::size_t rows = x.dim(0) * x.dim(1), t = x.dim(2);
  if (target_len == 0 || target_len > t) {
    throw DimensionError("time_pool: cannot pool length " + std::to_string(t) + " to " +
                         std::to_string(target_len));
  }
  std::vector<std::pair<std::size_t, std::size_t>> bins(target_len);
  for (std::size_t i = 0; i < target_len; ++i) {
    bins[i] = {i * t / target_len, ((i + 1) * t + target_len - 1) / target_len};
  }
  Tensor out({x.dim(0), x.dim(1), target_len});
  const double* xv = x.value().data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < target_len; ++i) {
      double s = 0.0;
      for (std::size_t k = bins[i].first; k < bins[i].second; ++k) s += xv[r * t + k];
      out[r * target_len + i] = s / static_cast<double>(bins[i].second - bins[i].first);
    }
  NodePtr xn = x.node();
  return make(std::move(out), {x}, "time_pool", [xn, bins, rows, t, target_len](Node& self) {
    double* gx = xn->grad_buffer().data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < target_len; ++i) {
        const double g = self.grad[r * target_len + i] /
                         static_cast<double>(bins[i].second - bins[i].first);
        for (std::size_t k = bins[i].first; k < bins[i].second; ++k) gx[r * t + k] += g;
      }
  });
}

Var frames_to_sequence(const Var& x, std::size_t batch) {
  expect_rank(x, 2, "frames_to_sequence");
  if (batch == 0 || x.dim(0) % batch != 0) {
    throw DimensionError("frames_to_sequence: " + shape_str(x.shape()) +
                         " is not divisible into " + std::to_string(batch) + " samples");
  }
  const std::size_t t = x.dim(0) / batch, c = x.dim(1);
  Tensor out({batch, c, t});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t f = 0; f < t; ++f)
      for (std::size_t ch = 0; ch < c; ++ch)
        out[(b * c + ch) * t + f] = x.value()[(b * t + f) * c + ch];
  NodePtr xn = x.node();
  return make(std::move(out), {x}, "frames_to_sequence", [xn, batch, t, c](Node& self) {
    double* gx = xn->grad_buffer().data();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t f = 0; f < t; ++f)
        for (std::size_t ch = 0; ch < c; ++ch)
          gx[(b * t + f) * c + ch] += self.grad[(b * c + ch) * t + f];
  });
}

}  // namespace kgs::ad
