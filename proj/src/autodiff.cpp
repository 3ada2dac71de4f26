// Copyright (c) 2026 The sharpkit authors
// SPDX-License-Identifier: Apache-2.0

#include "sharpkit/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sharpkit {

const Tensor& Var::value() const {
  if (!graph) throw GraphError("Var is not attached to a graph");
  return graph->value(id);
}

Var Graph::constant(Tensor value) {
  value.set_requires_grad(false);
  value.clear_grad();
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var{this, nodes_.size() - 1};
}

Var Graph::parameter(Tensor& source) {
  Tensor copy(source.shape(), source.values(), source.requires_grad());
  const bool tracked = record_ && source.requires_grad();
  nodes_.push_back(Node{std::move(copy), {}, {}, tracked ? &source : nullptr, tracked});
  return Var{this, nodes_.size() - 1};
}

Var Graph::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  bool needs = false;
  if (record_) {
    for (auto in : inputs) needs = needs || nodes_.at(in).needs_grad;
  }
  if (!needs) backward = nullptr;
  nodes_.push_back(Node{std::move(value), std::move(inputs), std::move(backward), nullptr, needs});
  return Var{this, nodes_.size() - 1};
}

std::span<double> Graph::grad_buffer(std::size_t id) {
  auto& g = grads_.at(id);
  if (g.empty()) g.assign(nodes_[id].value.numel(), 0.0);
  return g;
}

void Graph::backward(Var loss) {
  if (!record_) throw GraphError("backward() on a non-recording graph");
  if (loss.graph != this) throw GraphError("loss belongs to a different graph");
  if (differentiated_) throw GraphError("backward() called twice without reset()");
  if (nodes_.at(loss.id).value.numel() != 1) {
    throw GraphError("backward() needs a scalar loss, got shape " +
                     shape_to_string(nodes_[loss.id].value.shape()));
  }
  differentiated_ = true;
  grads_.assign(nodes_.size(), {});
  grads_[loss.id] = {1.0};

  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (!node.needs_grad || grads_[i].empty()) continue;
    if (node.backward) node.backward(*this, grads_[i]);
    if (node.leaf) node.leaf->set_grad(grads_[i]);
  }
  // Leaves the loss does not depend on still get a defined (zero) gradient.
  for (std::size_t i = 0; i <= loss.id; ++i) {
    auto& node = nodes_[i];
    if (node.leaf && grads_[i].empty()) node.leaf->set_grad(std::vector<double>(node.value.numel(), 0.0));
  }
  grads_.clear();
}

void Graph::reset() {
  nodes_.clear();
  grads_.clear();
  differentiated_ = false;
}

namespace {

void require_same_graph(Var a, Var b) {
  if (a.graph == nullptr || a.graph != b.graph) throw GraphError("operands live on different graphs");
}

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_to_string(a) + " and " +
                   shape_to_string(b));
}

// Elements per channel for a [N,C,...] tensor.
std::size_t inner_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t i = 2; i < s.size(); ++i) n *= s[i];
  return n;
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_graph(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    shape_mismatch("matmul", av.shape(), bv.shape());
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  std::vector<double> out(m * n, 0.0);
  const auto A = av.data();
  const auto B = bv.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * B[p * n + j];
    }
  }
  const auto ia = a.id, ib = b.id;
  return a.graph->record(Tensor({m, n}, std::move(out)), {ia, ib},
                         [ia, ib, m, k, n](Graph& g, std::span<const double> go) {
                           const auto A = g.value(ia).data();
                           const auto B = g.value(ib).data();
                           if (g.needs_grad(ia)) {
                             auto dA = g.grad_buffer(ia);
                             for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t p = 0; p < k; ++p) {
                                 double s = 0.0;
                                 for (std::size_t j = 0; j < n; ++j) s += go[i * n + j] * B[p * n + j];
                                 dA[i * k + p] += s;
                               }
                           }
                           if (g.needs_grad(ib)) {
                             auto dB = g.grad_buffer(ib);
                             for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t p = 0; p < k; ++p) {
                                 const double aip = A[i * k + p];
                                 for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += aip * go[i * n + j];
                               }
                           }
                         });
}

Var add(Var a, Var b) {
  require_same_graph(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  const auto ia = a.id, ib = b.id;
  if (av.shape() == bv.shape()) {
    std::vector<double> out(av.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return a.graph->record(Tensor(av.shape(), std::move(out)), {ia, ib},
                           [ia, ib](Graph& g, std::span<const double> go) {
                             for (auto id : {ia, ib}) {
                               if (!g.needs_grad(id)) continue;
                               auto d = g.grad_buffer(id);
                               for (std::size_t i = 0; i < go.size(); ++i) d[i] += go[i];
                             }
                           });
  }
  // Bias add: b is [C] and a is [N,C,...].
  if (bv.rank() != 1 || av.rank() < 2 || av.dim(1) != bv.dim(0)) {
    shape_mismatch("add", av.shape(), bv.shape());
  }
  const std::size_t n = av.dim(0), c = av.dim(1), inner = inner_size(av.shape());
  std::vector<double> out(av.numel());
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t q = 0; q < inner; ++q) {
        const std::size_t idx = (s * c + ch) * inner + q;
        out[idx] = av[idx] + bv[ch];
      }
  return a.graph->record(Tensor(av.shape(), std::move(out)), {ia, ib},
                         [ia, ib, n, c, inner](Graph& g, std::span<const double> go) {
                           if (g.needs_grad(ia)) {
                             auto d = g.grad_buffer(ia);
                             for (std::size_t i = 0; i < go.size(); ++i) d[i] += go[i];
                           }
                           if (g.needs_grad(ib)) {
                             auto d = g.grad_buffer(ib);
                             for (std::size_t s = 0; s < n; ++s)
                               for (std::size_t ch = 0; ch < c; ++ch)
                                 for (std::size_t q = 0; q < inner; ++q) d[ch] += go[(s * c + ch) * inner + q];
                           }
                         });
}

Var mul(Var a, Var b) {
  require_same_graph(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.shape() != bv.shape()) shape_mismatch("mul", av.shape(), bv.shape());
  std::vector<double> out(av.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const auto ia = a.id, ib = b.id;
  return a.graph->record(Tensor(av.shape(), std::move(out)), {ia, ib},
                         [ia, ib](Graph& g, std::span<const double> go) {
                           const auto A = g.value(ia).data();
                           const auto B = g.value(ib).data();
                           if (g.needs_grad(ia)) {
                             auto d = g.grad_buffer(ia);
                             for (std::size_t i = 0; i < go.size(); ++i) d[i] += go[i] * B[i];
                           }
                           if (g.needs_grad(ib)) {
                             auto d = g.grad_buffer(ib);
                             for (std::size_t i = 0; i < go.size(); ++i) d[i] += go[i] * A[i];
                           }
                         });
}

Var sum(Var x) {
  const auto& xv = x.value();
  double s = 0.0;
  for (double v : xv.data()) s += v;
  const auto ix = x.id;
  return x.graph->record(Tensor({1}, {s}), {ix}, [ix](Graph& g, std::span<const double> go) {
    auto d = g.grad_buffer(ix);
    for (auto& v : d) v += go[0];
  });
}

Var relu(Var x) {
  const auto& xv = x.value();
  std::vector<double> out(xv.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  const auto ix = x.id;
  return x.graph->record(Tensor(xv.shape(), std::move(out)), {ix},
                         [ix](Graph& g, std::span<const double> go) {
                           const auto X = g.value(ix).data();
                           auto d = g.grad_buffer(ix);
                           for (std::size_t i = 0; i < go.size(); ++i)
                             if (X[i] > 0.0) d[i] += go[i];
                         });
}

Var conv2d(Var x, Var kernel, std::size_t stride, std::size_t padding) {
  require_same_graph(x, kernel);
  const auto& xv = x.value();
  const auto& kv = kernel.value();
  if (stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
  if (xv.rank() != 4 || kv.rank() != 4 || xv.dim(1) != kv.dim(1)) {
    shape_mismatch("conv2d", xv.shape(), kv.shape());
  }
  const std::size_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const std::size_t O = kv.dim(0), KH = kv.dim(2), KW = kv.dim(3);
  if (H + 2 * padding < KH || W + 2 * padding < KW) shape_mismatch("conv2d", xv.shape(), kv.shape());
  const std::size_t OH = (H + 2 * padding - KH) / stride + 1;
  const std::size_t OW = (W + 2 * padding - KW) / stride + 1;

  // Visits every (output, input, kernel) triple that lies inside the image.
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t o = 0; o < O; ++o)
        for (std::size_t oh = 0; oh < OH; ++oh)
          for (std::size_t ow = 0; ow < OW; ++ow) {
            const std::size_t out_idx = ((n * O + o) * OH + oh) * OW + ow;
            for (std::size_t c = 0; c < C; ++c)
              for (std::size_t kh = 0; kh < KH; ++kh) {
                const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + kh) -
                                          static_cast<std::ptrdiff_t>(padding);
                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                for (std::size_t kw = 0; kw < KW; ++kw) {
                  const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + kw) -
                                            static_cast<std::ptrdiff_t>(padding);
                  if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                  const std::size_t in_idx = ((n * C + c) * H + static_cast<std::size_t>(ih)) * W +
                                             static_cast<std::size_t>(iw);
                  const std::size_t k_idx = ((o * C + c) * KH + kh) * KW + kw;
                  fn(out_idx, in_idx, k_idx);
                }
              }
          }
  };

  std::vector<double> out(N * O * OH * OW, 0.0);
  const auto X = xv.data();
  const auto K = kv.data();
  for_each_tap([&](std::size_t oi, std::size_t ii, std::size_t ki) { out[oi] += X[ii] * K[ki]; });

  const auto ix = x.id, ik = kernel.id;
  return x.graph->record(Tensor({N, O, OH, OW}, std::move(out)), {ix, ik},
                         [ix, ik, for_each_tap](Graph& g, std::span<const double> go) {
                           const auto X = g.value(ix).data();
                           const auto K = g.value(ik).data();
                           if (g.needs_grad(ix)) {
                             auto dX = g.grad_buffer(ix);
                             for_each_tap([&](std::size_t oi, std::size_t ii, std::size_t ki) {
                               dX[ii] += go[oi] * K[ki];
                             });
                           }
                           if (g.needs_grad(ik)) {
                             auto dK = g.grad_buffer(ik);
                             for_each_tap([&](std::size_t oi, std::size_t ii, std::size_t ki) {
                               dK[ki] += go[oi] * X[ii];
                             });
                           }
                         });
}

Var avgpool2d(Var x, std::size_t k) {
  const auto& xv = x.value();
  if (xv.rank() != 4) throw ShapeError("avgpool2d: expected [N,C,H,W], got " + shape_to_string(xv.shape()));
  if (k == 0 || xv.dim(2) < k || xv.dim(3) < k) {
    throw ShapeError("avgpool2d: window " + std::to_string(k) + " does not fit " + shape_to_string(xv.shape()));
  }
  const std::size_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const std::size_t OH = H / k, OW = W / k;
  const double inv = 1.0 / static_cast<double>(k * k);
  std::vector<double> out(N * C * OH * OW, 0.0);
  for (std::size_t nc = 0; nc < N * C; ++nc)
    for (std::size_t oh = 0; oh < OH; ++oh)
      for (std::size_t ow = 0; ow < OW; ++ow) {
        double s = 0.0;
        for (std::size_t i = 0; i < k; ++i)
          for (std::size_t j = 0; j < k; ++j) s += xv[(nc * H + oh * k + i) * W + ow * k + j];
        out[(nc * OH + oh) * OW + ow] = s * inv;
      }
  const auto ix = x.id;
  return x.graph->record(Tensor({N, C, OH, OW}, std::move(out)), {ix},
                         [=](Graph& g, std::span<const double> go) {
                           auto d = g.grad_buffer(ix);
                           for (std::size_t nc = 0; nc < N * C; ++nc)
                             for (std::size_t oh = 0; oh < OH; ++oh)
                               for (std::size_t ow = 0; ow < OW; ++ow) {
                                 const double v = go[(nc * OH + oh) * OW + ow] * inv;
                                 for (std::size_t i = 0; i < k; ++i)
                                   for (std::size_t j = 0; j < k; ++j) d[(nc * H + oh * k + i) * W + ow * k + j] += v;
                               }
                         });
}

Var flatten(Var x) {
  const auto& xv = x.value();
  if (xv.rank() < 1) throw ShapeError("flatten: scalar input");
  const std::size_t n = xv.dim(0);
  const auto ix = x.id;
  return x.graph->record(xv.reshaped({n, xv.numel() / n}), {ix}, [ix](Graph& g, std::span<const double> go) {
    auto d = g.grad_buffer(ix);
    for (std::size_t i = 0; i < go.size(); ++i) d[i] += go[i];
  });
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  const auto& lv = logits.value();
  if (lv.rank() != 2) throw ShapeError("softmax_cross_entropy: logits must be [N,K], got " + shape_to_string(lv.shape()));
  const std::size_t n = lv.dim(0), k = lv.dim(1);
  if (labels.size() != n) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                     shape_to_string(lv.shape()));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(y) + " outside [0, " +
                              std::to_string(k) + ")");
    }
  }
  std::vector<double> probs(n * k);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = lv.data().data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    const double log_z = std::log(z) + mx;
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] = std::exp(row[j] - log_z);
    total += log_z - row[labels[i]];
  }
  const double mean = total / static_cast<double>(n);
  const auto il = logits.id;
  std::vector<int> y(labels.begin(), labels.end());
  return logits.graph->record(Tensor({1}, {mean}), {il},
                              [il, n, k, probs = std::move(probs), y = std::move(y)](Graph& g,
                                                                                     std::span<const double> go) {
                                auto d = g.grad_buffer(il);
                                const double scale = go[0] / static_cast<double>(n);
                                for (std::size_t i = 0; i < n; ++i)
                                  for (std::size_t j = 0; j < k; ++j) {
                                    const double onehot = static_cast<std::size_t>(y[i]) == j ? 1.0 : 0.0;
                                    d[i * k + j] += scale * (probs[i * k + j] - onehot);
                                  }
                              });
}

namespace {

void check_bn_shapes(const Tensor& x, const Tensor& scale, const Tensor& shift) {
  if (x.rank() < 2) throw ShapeError("batch norm: expected [N,C,...], got " + shape_to_string(x.shape()));
  if (scale.shape() != Shape{x.dim(1)}) shape_mismatch("batch norm", x.shape(), scale.shape());
  if (shift.shape() != Shape{x.dim(1)}) shape_mismatch("batch norm", x.shape(), shift.shape());
}

// Shared affine-normalisation forward: y = scale * (x - mean) * inv_std + shift.
std::vector<double> bn_apply(const Tensor& x, std::span<const double> scale, std::span<const double> shift,
                             std::span<const double> mean, std::span<const double> inv_std) {
  const std::size_t n = x.dim(0), c = x.dim(1), inner = inner_size(x.shape());
  std::vector<double> out(x.numel());
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t q = 0; q < inner; ++q) {
        const std::size_t idx = (s * c + ch) * inner + q;
        out[idx] = scale[ch] * ((x[idx] - mean[ch]) * inv_std[ch]) + shift[ch];
      }
  return out;
}

}  // namespace

Var batch_norm_train(Var x, Var scale, Var shift, double epsilon, BatchMoments* moments) {
  require_same_graph(x, scale);
  require_same_graph(x, shift);
  const auto& xv = x.value();
  check_bn_shapes(xv, scale.value(), shift.value());
  const std::size_t n = xv.dim(0), c = xv.dim(1), inner = inner_size(xv.shape());
  const std::size_t count = n * inner;
  std::vector<double> mean(c, 0.0), var(c, 0.0), inv_std(c);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t q = 0; q < inner; ++q) mean[ch] += xv[(s * c + ch) * inner + q];
  for (auto& m : mean) m /= static_cast<double>(count);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t q = 0; q < inner; ++q) {
        const double d = xv[(s * c + ch) * inner + q] - mean[ch];
        var[ch] += d * d;
      }
  for (std::size_t ch = 0; ch < c; ++ch) {
    var[ch] /= static_cast<double>(count);
    inv_std[ch] = 1.0 / std::sqrt(var[ch] + epsilon);
  }
  auto out = bn_apply(xv, scale.value().data(), shift.value().data(), mean, inv_std);
  if (moments) *moments = BatchMoments{mean, var, count};

  const auto ix = x.id, ig = scale.id, ib = shift.id;
  return x.graph->record(
      Tensor(xv.shape(), std::move(out)), {ix, ig, ib},
      [=, mean = std::move(mean), inv_std = std::move(inv_std)](Graph& g, std::span<const double> go) {
        const auto X = g.value(ix).data();
        const auto G = g.value(ig).data();
        auto xhat = [&](std::size_t idx, std::size_t ch) { return (X[idx] - mean[ch]) * inv_std[ch]; };
        std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
        for (std::size_t s = 0; s < n; ++s)
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t q = 0; q < inner; ++q) {
              const std::size_t idx = (s * c + ch) * inner + q;
              sum_dy[ch] += go[idx];
              sum_dy_xhat[ch] += go[idx] * xhat(idx, ch);
            }
        if (g.needs_grad(ig)) {
          auto d = g.grad_buffer(ig);
          for (std::size_t ch = 0; ch < c; ++ch) d[ch] += sum_dy_xhat[ch];
        }
        if (g.needs_grad(ib)) {
          auto d = g.grad_buffer(ib);
          for (std::size_t ch = 0; ch < c; ++ch) d[ch] += sum_dy[ch];
        }
        if (g.needs_grad(ix)) {
          auto d = g.grad_buffer(ix);
          const double m = static_cast<double>(count);
          for (std::size_t s = 0; s < n; ++s)
            for (std::size_t ch = 0; ch < c; ++ch)
              for (std::size_t q = 0; q < inner; ++q) {
                const std::size_t idx = (s * c + ch) * inner + q;
                d[idx] += G[ch] * inv_std[ch] / m *
                          (m * go[idx] - sum_dy[ch] - xhat(idx, ch) * sum_dy_xhat[ch]);
              }
        }
      });
}

Var batch_norm_eval(Var x, Var scale, Var shift, std::span<const double> mean, std::span<const double> variance,
                    double epsilon) {
  require_same_graph(x, scale);
  require_same_graph(x, shift);
  const auto& xv = x.value();
  check_bn_shapes(xv, scale.value(), shift.value());
  const std::size_t n = xv.dim(0), c = xv.dim(1), inner = inner_size(xv.shape());
  if (mean.size() != c || variance.size() != c) {
    throw ShapeError("batch norm: running statistics have " + std::to_string(mean.size()) + " channels, input " +
                     shape_to_string(xv.shape()));
  }
  std::vector<double> mu(mean.begin(), mean.end()), inv_std(c);
  for (std::size_t ch = 0; ch < c; ++ch) inv_std[ch] = 1.0 / std::sqrt(variance[ch] + epsilon);
  auto out = bn_apply(xv, scale.value().data(), shift.value().data(), mu, inv_std);

  const auto ix = x.id, ig = scale.id, ib = shift.id;
  return x.graph->record(
      Tensor(xv.shape(), std::move(out)), {ix, ig, ib},
      [=, mu = std::move(mu), inv_std = std::move(inv_std)](Graph& g, std::span<const double> go) {
        const auto X = g.value(ix).data();
        const auto G = g.value(ig).data();
        const bool dx = g.needs_grad(ix), dg = g.needs_grad(ig), db = g.needs_grad(ib);
        std::span<double> gx, gg, gb;
        if (dx) gx = g.grad_buffer(ix);
        if (dg) gg = g.grad_buffer(ig);
        if (db) gb = g.grad_buffer(ib);
        for (std::size_t s = 0; s < n; ++s)
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t q = 0; q < inner; ++q) {
              const std::size_t idx = (s * c + ch) * inner + q;
              if (dx) gx[idx] += go[idx] * G[ch] * inv_std[ch];
              if (dg) gg[ch] += go[idx] * (X[idx] - mu[ch]) * inv_std[ch];
              if (db) gb[ch] += go[idx];
            }
      });
}

}  // namespace sharpkit
