// Copyright (c) 2026 The sharpkit authors
// SPDX-License-Identifier: Apache-2.0

#include "sharpkit/model.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "sharpkit/random.hpp"

namespace sharpkit {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv: return "conv";
    case LayerKind::relu: return "relu";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::pool: return "pool";
    case LayerKind::flatten: return "flatten";
  }
  return "?";
}

std::string to_string(ParamKind kind) {
  switch (kind) {
    case ParamKind::weight: return "weight";
    case ParamKind::bias: return "bias";
    case ParamKind::bn_scale: return "bn_scale";
    case ParamKind::bn_shift: return "bn_shift";
  }
  return "?";
}

ParamKind parse_param_kind(const std::string& name) {
  if (name == "weight") return ParamKind::weight;
  if (name == "bias") return ParamKind::bias;
  if (name == "bn_scale") return ParamKind::bn_scale;
  if (name == "bn_shift") return ParamKind::bn_shift;
  throw std::invalid_argument("unknown parameter kind '" + name + "'");
}

void ParamSet::add(std::string name, Tensor tensor, ParamKind kind) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
  tensor.set_requires_grad(true);
  entries_.push_back(Param{std::move(name), std::move(tensor), kind});
}

Param* ParamSet::find(const std::string& name) {
  for (auto& p : entries_)
    if (p.name == name) return &p;
  return nullptr;
}

const Param* ParamSet::find(const std::string& name) const {
  for (const auto& p : entries_)
    if (p.name == name) return &p;
  return nullptr;
}

std::size_t ParamSet::total_elements() const {
  std::size_t n = 0;
  for (const auto& p : entries_) n += p.tensor.numel();
  return n;
}

std::vector<std::vector<double>> ParamSet::snapshot() const {
  std::vector<std::vector<double>> out;
  out.reserve(entries_.size());
  for (const auto& p : entries_) out.push_back(p.tensor.values());
  return out;
}

void ParamSet::restore(const std::vector<std::vector<double>>& values) {
  if (values.size() != entries_.size()) throw ShapeError("snapshot does not match parameter count");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto dst = entries_[i].tensor.data();
    if (values[i].size() != dst.size()) throw ShapeError("snapshot does not match " + entries_[i].name);
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

void ParamSet::clear_grads() {
  for (auto& p : entries_) p.tensor.clear_grad();
}

namespace {

Tensor kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (auto& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

[[noreturn]] void bad_layer(std::size_t i, const LayerSpec& spec, const Shape& current, const std::string& why) {
  throw ShapeError("layer " + std::to_string(i) + " (" + to_string(spec.kind) + ") cannot follow shape " +
                   shape_to_string(current) + ": " + why);
}

}  // namespace

Model::Model(std::vector<LayerSpec> layers, Shape input_shape, std::uint64_t init_seed)
    : layers_(std::move(layers)), input_shape_(std::move(input_shape)) {
  if (layers_.empty()) throw std::invalid_argument("model needs at least one layer");
  if (input_shape_.empty() || shape_numel(input_shape_) == 0) {
    throw std::invalid_argument("model input shape must be non-empty and positive");
  }
  Rng rng = Rng::derive(init_seed, Stream::init);
  layer_params_.resize(layers_.size());
  bn_.resize(layers_.size());
  Shape cur = input_shape_;

  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& L = layers_[i];
    const std::string prefix = "layer" + std::to_string(i) + ".";
    switch (L.kind) {
      case LayerKind::dense: {
        if (cur.size() != 1 || cur[0] != L.in || L.out == 0) bad_layer(i, L, cur, "expects [" + std::to_string(L.in) + "]");
        layer_params_[i].first = params_.size();
        params_.add(prefix + "weight", kaiming_uniform({L.in, L.out}, L.in, rng), ParamKind::weight);
        if (L.has_bias) {
          layer_params_[i].second = params_.size();
          params_.add(prefix + "bias", Tensor::zeros({L.out}, true), ParamKind::bias);
        }
        cur = {L.out};
        break;
      }
      case LayerKind::conv: {
        if (cur.size() != 3 || cur[0] != L.in || L.out == 0 || L.kernel == 0 || L.stride == 0) {
          bad_layer(i, L, cur, "expects [" + std::to_string(L.in) + ",H,W]");
        }
        if (cur[1] + 2 * L.padding < L.kernel || cur[2] + 2 * L.padding < L.kernel) bad_layer(i, L, cur, "kernel too large");
        layer_params_[i].first = params_.size();
        params_.add(prefix + "weight", kaiming_uniform({L.out, L.in, L.kernel, L.kernel}, L.in * L.kernel * L.kernel, rng),
                    ParamKind::weight);
        if (L.has_bias) {
          layer_params_[i].second = params_.size();
          params_.add(prefix + "bias", Tensor::zeros({L.out}, true), ParamKind::bias);
        }
        cur = {L.out, (cur[1] + 2 * L.padding - L.kernel) / L.stride + 1,
               (cur[2] + 2 * L.padding - L.kernel) / L.stride + 1};
        break;
      }
      case LayerKind::batchnorm: {
        if (cur.empty() || cur[0] != L.in) bad_layer(i, L, cur, "channel width must match predecessor");
        layer_params_[i].first = params_.size();
        params_.add(prefix + "scale", Tensor::filled({L.in}, 1.0, true), ParamKind::bn_scale);
        layer_params_[i].second = params_.size();
        params_.add(prefix + "shift", Tensor::zeros({L.in}, true), ParamKind::bn_shift);
        bn_[i] = BatchNormState{std::vector<double>(L.in, 0.0), std::vector<double>(L.in, 1.0)};
        break;
      }
      case LayerKind::pool:
        if (cur.size() != 3 || L.kernel == 0 || cur[1] < L.kernel || cur[2] < L.kernel) bad_layer(i, L, cur, "bad window");
        cur = {cur[0], cur[1] / L.kernel, cur[2] / L.kernel};
        break;
      case LayerKind::flatten:
        cur = {shape_numel(cur)};
        break;
      case LayerKind::relu:
        break;
    }
  }
  if (cur.size() != 1) throw ShapeError("model output must be a vector of logits, got " + shape_to_string(cur));
  num_classes_ = cur[0];
}

Var Model::forward_impl(Var x, Mode mode, const ParamBinder& bind,
                        std::vector<std::pair<std::size_t, BatchMoments>>* moments) const {
  Shape expected{x.shape().empty() ? 0 : x.shape()[0]};
  expected.insert(expected.end(), input_shape_.begin(), input_shape_.end());
  if (x.shape() != expected) {
    throw ShapeError("model expects input [N, " + shape_to_string(input_shape_).substr(1) + ", got " +
                     shape_to_string(x.shape()));
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& L = layers_[i];
    const auto& lp = layer_params_[i];
    switch (L.kind) {
      case LayerKind::dense:
        x = matmul(x, bind(*lp.first));
        if (lp.second) x = add(x, bind(*lp.second));
        break;
      case LayerKind::conv:
        x = conv2d(x, bind(*lp.first), L.stride, L.padding);
        if (lp.second) x = add(x, bind(*lp.second));
        break;
      case LayerKind::batchnorm: {
        const auto& st = *bn_[i];
        if (mode == Mode::train) {
          BatchMoments m;
          x = batch_norm_train(x, bind(*lp.first), bind(*lp.second), st.epsilon, &m);
          if (moments) moments->emplace_back(i, std::move(m));
        } else {
          x = batch_norm_eval(x, bind(*lp.first), bind(*lp.second), st.running_mean, st.running_var, st.epsilon);
        }
        break;
      }
      case LayerKind::relu: x = relu(x); break;
      case LayerKind::pool: x = avgpool2d(x, L.kernel); break;
      case LayerKind::flatten: x = flatten(x); break;
    }
  }
  return x;
}

Var Model::forward(Graph& graph, Var input, Mode mode, bool update_running_stats) {
  std::vector<std::pair<std::size_t, BatchMoments>> moments;
  Var out = forward_impl(
      input, mode, [&](std::size_t i) { return graph.parameter(params_[i].tensor); },
      update_running_stats ? &moments : nullptr);
  for (const auto& [layer, m] : moments) {
    auto& st = *bn_[layer];
    const double n = static_cast<double>(m.count);
    const double unbias = m.count > 1 ? n / (n - 1.0) : 1.0;
    for (std::size_t c = 0; c < st.running_mean.size(); ++c) {
      st.running_mean[c] = st.momentum * st.running_mean[c] + (1.0 - st.momentum) * m.mean[c];
      st.running_var[c] = st.momentum * st.running_var[c] + (1.0 - st.momentum) * m.variance[c] * unbias;
    }
  }
  return out;
}

Tensor Model::predict(const Tensor& input) const {
  Graph g(false);
  Var x = g.constant(input);
  return forward_impl(x, Mode::eval, [&](std::size_t i) { return g.constant(params_[i].tensor); }, nullptr)
      .value();
}

BatchNormState* Model::batchnorm_state(std::size_t layer_index) {
  if (layer_index >= bn_.size() || !bn_[layer_index]) return nullptr;
  return &*bn_[layer_index];
}

const BatchNormState* Model::batchnorm_state(std::size_t layer_index) const {
  if (layer_index >= bn_.size() || !bn_[layer_index]) return nullptr;
  return &*bn_[layer_index];
}

std::vector<std::size_t> Model::weighted_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (layers_[i].kind == LayerKind::dense || layers_[i].kind == LayerKind::conv) out.push_back(i);
  return out;
}

std::string Model::first_layer_weight_name() const {
  const auto w = weighted_layers();
  if (w.empty()) throw std::logic_error("model has no dense or conv layer");
  return "layer" + std::to_string(w.front()) + ".weight";
}

Model build_mlp(const std::vector<std::size_t>& widths, bool use_batchnorm, std::uint64_t seed, bool has_bias) {
  if (widths.size() < 2) throw std::invalid_argument("build_mlp needs at least 2 widths");
  for (auto w : widths)
    if (w == 0) throw std::invalid_argument("build_mlp widths must be positive");
  std::vector<LayerSpec> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    LayerSpec dense{LayerKind::dense, widths[i], widths[i + 1]};
    dense.has_bias = has_bias;
    layers.push_back(dense);
    if (i + 2 < widths.size()) {
      if (use_batchnorm) layers.push_back(LayerSpec{LayerKind::batchnorm, widths[i + 1]});
      layers.push_back(LayerSpec{LayerKind::relu});
    }
  }
  return Model(std::move(layers), {widths.front()}, seed);
}

Model build_small_cnn(std::size_t in_channels, std::size_t num_classes, bool use_batchnorm, std::uint64_t seed,
                      std::size_t image_size) {
  if (in_channels == 0 || num_classes == 0) throw std::invalid_argument("build_small_cnn: channel counts must be positive");
  if (image_size < 4 || image_size % 4 != 0) throw std::invalid_argument("build_small_cnn: image size must be a multiple of 4");
  constexpr std::size_t kWidth1 = 8, kWidth2 = 16;
  std::vector<LayerSpec> layers;
  auto block = [&](std::size_t in, std::size_t out) {
    LayerSpec conv{LayerKind::conv, in, out, 3, 1, 1, true};
    layers.push_back(conv);
    if (use_batchnorm) layers.push_back(LayerSpec{LayerKind::batchnorm, out});
    layers.push_back(LayerSpec{LayerKind::relu});
    layers.push_back(LayerSpec{LayerKind::pool, 0, 0, 2});
  };
  block(in_channels, kWidth1);
  block(kWidth1, kWidth2);
  layers.push_back(LayerSpec{LayerKind::flatten});
  const std::size_t flat = kWidth2 * (image_size / 4) * (image_size / 4);
  layers.push_back(LayerSpec{LayerKind::dense, flat, num_classes, 0, 1, 0, true});
  return Model(std::move(layers), {in_channels, image_size, image_size}, seed);
}

Checkpoint make_checkpoint(const Model& model) {
  Checkpoint ckpt;
  for (const auto& p : model.params()) {
    ckpt.entries.push_back({p.name, to_string(p.kind), p.tensor.shape(), p.tensor.values()});
  }
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    if (const auto* st = model.batchnorm_state(i)) {
      const std::string prefix = "layer" + std::to_string(i) + ".";
      ckpt.entries.push_back({prefix + "running_mean", "buffer", {st->running_mean.size()}, st->running_mean});
      ckpt.entries.push_back({prefix + "running_var", "buffer", {st->running_var.size()}, st->running_var});
    }
  }
  return ckpt;
}

void apply_checkpoint(const Checkpoint& ckpt, Model& model) {
  const auto expected = make_checkpoint(model);
  if (expected.entries.size() != ckpt.entries.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(ckpt.entries.size()) + " tensors, model expects " +
                          std::to_string(expected.entries.size()));
  }
  for (std::size_t i = 0; i < ckpt.entries.size(); ++i) {
    const auto& got = ckpt.entries[i];
    const auto& want = expected.entries[i];
    if (got.name != want.name || got.kind != want.kind || got.shape != want.shape) {
      throw CheckpointError("checkpoint entry " + std::to_string(i) + " is " + got.name + " " + got.kind + " " +
                            shape_to_string(got.shape) + ", model expects " + want.name + " " + want.kind + " " +
                            shape_to_string(want.shape));
    }
  }
  std::size_t i = 0;
  for (auto& p : model.params()) {
    const auto& v = ckpt.entries[i++].values;
    std::copy(v.begin(), v.end(), p.tensor.data().begin());
  }
  for (std::size_t layer = 0; layer < model.layers().size(); ++layer) {
    if (auto* st = model.batchnorm_state(layer)) {
      st->running_mean = ckpt.entries[i++].values;
      st->running_var = ckpt.entries[i++].values;
    }
  }
}

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw CheckpointError("bad number '" + s + "'");
  return v;
}

}  // namespace

void write_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
  out << "sharpkit-checkpoint " << kCheckpointVersion << '\n';
  for (const auto& e : ckpt.entries) {
    out << "tensor " << e.name << ' ' << e.kind << ' ' << e.shape.size();
    for (auto d : e.shape) out << ' ' << d;
    out << '\n';
    for (std::size_t i = 0; i < e.values.size(); ++i) {
      if (i) out << ' ';
      out << format_double(e.values[i]);
    }
    out << '\n';
  }
  out << "end\n";
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "sharpkit-checkpoint") throw CheckpointError("not a sharpkit checkpoint");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  std::string tag;
  while (in >> tag) {
    if (tag == "end") return ckpt;
    if (tag != "tensor") throw CheckpointError("unexpected record '" + tag + "'");
    CheckpointEntry e;
    std::size_t rank = 0;
    if (!(in >> e.name >> e.kind >> rank)) throw CheckpointError("truncated tensor header");
    e.shape.resize(rank);
    for (auto& d : e.shape)
      if (!(in >> d)) throw CheckpointError("truncated shape for " + e.name);
    const auto n = shape_numel(e.shape);
    e.values.reserve(n);
    std::string tok;
    for (std::size_t i = 0; i < n; ++i) {
      if (!(in >> tok)) throw CheckpointError("truncated values for " + e.name);
      e.values.push_back(parse_double(tok));
    }
    ckpt.entries.push_back(std::move(e));
  }
  throw CheckpointError("checkpoint missing 'end' marker");
}

void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw CheckpointError("cannot write " + path);
  write_checkpoint(make_checkpoint(model), out);
}

void load_checkpoint(Model& model, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  apply_checkpoint(read_checkpoint(in), model);
}

}  // namespace sharpkit
