// Copyright (c) 2026 The sharpkit authors
// SPDX-License-Identifier: Apache-2.0
//
// Tape-style reverse-mode automatic differentiation.
//
// A Graph is an append-only list of nodes. Every op appends its output after
// its inputs, so the tape is topologically ordered by construction and
// backward() is a single reverse sweep. The graph is meant to be rebuilt for
// every forward pass; a graph can be differentiated once and must be reset()
// before it is reused.
//
// Usage:
//   Graph g;
//   Var w = g.parameter(weights);          // weights.requires_grad() == true
//   Var x = g.constant(batch);
//   Var loss = softmax_cross_entropy(matmul(x, w), labels);
//   g.backward(loss);                      // weights.grad() now holds dL/dw

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "sharpkit/tensor.hpp"

namespace sharpkit {

class Graph;

/// Handle to a node on a Graph.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Misuse of the tape: double backward, non-scalar loss, mixing graphs.
class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::span<const double> grad_out)>;

  /// A non-recording graph computes values only; backward() is rejected.
  explicit Graph(bool record = true) : record_(record) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to `source`; backward() overwrites source's gradient.
  /// The value is copied, so later edits to `source` do not affect this tape.
  Var parameter(Tensor& source);

  void backward(Var loss);
  void reset();

  bool recording() const { return record_; }
  std::size_t node_count() const { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }

  /// True when gradients must flow into node `id`.
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  /// Gradient accumulator of node `id`, zero-initialised on first use.
  std::span<double> grad_buffer(std::size_t id);

  /// Appends an op result. Used by the op implementations.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Tensor* leaf = nullptr;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  bool record_ = true;
  bool differentiated_ = false;
};

// Forward ops. Each appends one node to the graph its inputs live on.

/// [M,K] x [K,N] -> [M,N].
Var matmul(Var a, Var b);
/// Elementwise sum of equal shapes, or bias-add of a [C] vector along dim 1.
Var add(Var a, Var b);
/// Elementwise product of equal shapes.
Var mul(Var a, Var b);
/// Sum of all elements, shape [1].
Var sum(Var x);
/// max(x, 0); the derivative at exactly 0 is taken as 0.
Var relu(Var x);
/// Direct 2-D cross-correlation. x: [N,C,H,W], kernel: [O,C,KH,KW].
Var conv2d(Var x, Var kernel, std::size_t stride = 1, std::size_t padding = 0);
/// Non-overlapping k x k mean pooling over the last two dims.
Var avgpool2d(Var x, std::size_t k);
/// [N, ...] -> [N, prod(...)].
Var flatten(Var x);
/// Mean softmax cross-entropy over the batch. logits: [N,K], labels in [0,K).
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

/// Per-channel statistics produced by a train-mode batch norm.
struct BatchMoments {
  std::vector<double> mean;
  std::vector<double> variance;  // biased (divides by count)
  std::size_t count = 0;         // elements per channel
};

/// Batch norm over dim 1 using the batch's own statistics.
/// x: [N,C] or [N,C,H,W]; scale and shift: [C].
Var batch_norm_train(Var x, Var scale, Var shift, double epsilon, BatchMoments* moments = nullptr);
/// Batch norm with fixed statistics (evaluation mode).
Var batch_norm_eval(Var x, Var scale, Var shift, std::span<const double> mean,
                    std::span<const double> variance, double epsilon);

/// Evaluates `fn` on a private non-recording graph and returns the value.
/// No node is added to any caller-owned graph.
template <typename Fn>
Tensor no_grad_eval(Fn&& fn, std::span<const Tensor> inputs) {
  Graph scratch(false);
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(scratch.constant(t));
  Var out = fn(scratch, std::span<const Var>(vars));
  return out.value();
}

}  // namespace sharpkit
