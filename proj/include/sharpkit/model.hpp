// Copyright (c) 2026 The sharpkit authors
// SPDX-License-Identifier: Apache-2.0
//
// Small feed-forward architectures (MLP, two-block CNN) with an optional
// batch-norm layer after every dense/conv layer, and their checkpoints.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sharpkit/autodiff.hpp"
#include "sharpkit/tensor.hpp"

namespace sharpkit {

enum class LayerKind { dense, conv, relu, batchnorm, pool, flatten };
enum class ParamKind { weight, bias, bn_scale, bn_shift };
enum class Mode { train, eval };

std::string to_string(LayerKind kind);
std::string to_string(ParamKind kind);
ParamKind parse_param_kind(const std::string& name);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t in = 0;       // dense: input features; conv/batchnorm: channels
  std::size_t out = 0;      // dense: output features; conv: output channels
  std::size_t kernel = 0;   // conv kernel size, pool window
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool has_bias = false;
};

struct Param {
  std::string name;  // layer{i}.{weight|bias|scale|shift}
  Tensor tensor;
  ParamKind kind;
};

/// Ordered, uniquely named trainable tensors. Iteration order is insertion
/// order, which for a model is layer order.
class ParamSet {
 public:
  void add(std::string name, Tensor tensor, ParamKind kind);

  std::size_t size() const { return entries_.size(); }
  Param& operator[](std::size_t i) { return entries_[i]; }
  const Param& operator[](std::size_t i) const { return entries_[i]; }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  Param* find(const std::string& name);
  const Param* find(const std::string& name) const;
  std::size_t total_elements() const;

  /// Copy of every parameter's values, in order.
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& values);
  void clear_grads();

 private:
  std::vector<Param> entries_;
};

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.9;  // weight kept on the old running value
  double epsilon = 1e-5;
};

class Model {
 public:
  /// Builds and initialises the layer stack. Weights are Kaiming-uniform
  /// (bound sqrt(6 / fan_in)), biases and bn shifts zero, bn scales one.
  Model(std::vector<LayerSpec> layers, Shape input_shape, std::uint64_t init_seed);

  /// Logits for `input` ([N, input_shape...]). In train mode batch norm uses
  /// batch statistics and, when update_running_stats is set, folds them into
  /// the running estimates. Eval mode never mutates the model.
  Var forward(Graph& graph, Var input, Mode mode, bool update_running_stats = true);
  /// Eval-mode logits without recording gradients.
  Tensor predict(const Tensor& input) const;

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  const Shape& input_shape() const { return input_shape_; }
  std::size_t num_classes() const { return num_classes_; }

  /// Batch-norm state of layer `layer_index`, or nullptr.
  BatchNormState* batchnorm_state(std::size_t layer_index);
  const BatchNormState* batchnorm_state(std::size_t layer_index) const;

  /// Indices (into layers()) of dense and conv layers, in order.
  std::vector<std::size_t> weighted_layers() const;
  /// Name of the first dense/conv weight tensor.
  std::string first_layer_weight_name() const;

 private:
  using ParamBinder = std::function<Var(std::size_t param_index)>;
  struct LayerParams {
    std::optional<std::size_t> first;   // weight or bn scale
    std::optional<std::size_t> second;  // bias or bn shift
  };

  Var forward_impl(Var input, Mode mode, const ParamBinder& bind,
                   std::vector<std::pair<std::size_t, BatchMoments>>* moments) const;

  std::vector<LayerSpec> layers_;
  Shape input_shape_;
  std::size_t num_classes_ = 0;
  ParamSet params_;
  std::vector<LayerParams> layer_params_;          // indexed by layer
  std::vector<std::optional<BatchNormState>> bn_;  // indexed by layer
};

/// dense -> (batchnorm) -> relu per hidden width, then a linear head.
Model build_mlp(const std::vector<std::size_t>& widths, bool use_batchnorm, std::uint64_t seed,
                bool has_bias = true);

/// Two conv(3x3, pad 1) -> (batchnorm) -> relu -> avgpool(2) blocks with 8
/// and 16 channels, then flatten and a dense head. image_size must be a
/// multiple of 4.
Model build_small_cnn(std::size_t in_channels, std::size_t num_classes, bool use_batchnorm, std::uint64_t seed,
                      std::size_t image_size = 8);

// Checkpoints.
//
// Text format, two lines per tensor:
//
//   sharpkit-checkpoint 1
//   tensor <name> <kind> <rank> <dim>...
//   <values, space separated, shortest round-trip decimal>
//   ...
//   end
//
// kind is weight, bias, bn_scale, bn_shift or buffer. Params come first in
// ParamSet order, then batch-norm running statistics as buffers named
// layer{i}.running_mean and layer{i}.running_var.

struct CheckpointEntry {
  std::string name;
  std::string kind;  // ParamKind name, or "buffer"
  Shape shape;
  std::vector<double> values;

  bool operator==(const CheckpointEntry&) const = default;
};

struct Checkpoint {
  std::vector<CheckpointEntry> entries;
  bool operator==(const Checkpoint&) const = default;
};

inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Checkpoint make_checkpoint(const Model& model);
/// Copies values into `model`; names, kinds and shapes must match exactly.
void apply_checkpoint(const Checkpoint& ckpt, Model& model);

void write_checkpoint(const Checkpoint& ckpt, std::ostream& out);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const Model& model, const std::string& path);
void load_checkpoint(Model& model, const std::string& path);

}  // namespace sharpkit
