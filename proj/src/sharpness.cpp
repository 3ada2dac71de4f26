// Copyright (c) 2026 The sharpkit authors
// SPDX-License-Identifier: Apache-2.0

#include "sharpkit/sharpness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "sharpkit/optimizer.hpp"
#include "sharpkit/random.hpp"

namespace sharpkit {

std::string to_string(ProbeMethod method) {
  switch (method) {
    case ProbeMethod::random_sphere: return "random_sphere";
    case ProbeMethod::grad_ascent: return "grad_ascent";
    case ProbeMethod::combined: return "combined";
  }
  return "?";
}

ProbeMethod parse_probe_method(const std::string& name) {
  if (name == "random_sphere") return ProbeMethod::random_sphere;
  if (name == "grad_ascent") return ProbeMethod::grad_ascent;
  if (name == "combined") return ProbeMethod::combined;
  throw std::invalid_argument("unknown probe method '" + name + "'");
}

std::string SharpnessEstimate::to_csv_line() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.9g,%.9g,%s,%zu,%d,%.9g", value, rho, to_string(method).c_str(), num_probes,
                adaptive ? 1 : 0, base_loss);
  return buf;
}

ModelObjective::ModelObjective(Model& model, const Dataset& slice) : model_(model) {
  if (slice.size() == 0) throw std::invalid_argument("sharpness needs a non-empty dataset slice");
  std::vector<std::size_t> idx(slice.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  inputs_ = slice.gather(idx);
  labels_ = slice.labels;
}

double ModelObjective::loss() {
  const Tensor logits = model_.predict(inputs_);
  Graph g(false);
  return softmax_cross_entropy(g.constant(logits), labels_).value().item();
}

double ModelObjective::loss_and_grad() {
  Graph g;
  Var logits = model_.forward(g, g.constant(inputs_), Mode::eval);
  Var loss = softmax_cross_entropy(logits, labels_);
  g.backward(loss);
  return loss.value().item();
}

namespace {

struct GradSnapshot {
  std::vector<bool> present;
  ParamVectors values;
};

GradSnapshot save_grads(const ParamSet& params) {
  GradSnapshot s;
  for (const auto& p : params) {
    s.present.push_back(p.tensor.has_grad());
    s.values.push_back(p.tensor.has_grad() ? std::vector<double>(p.tensor.grad().begin(), p.tensor.grad().end())
                                           : std::vector<double>{});
  }
  return s;
}

void restore_grads(ParamSet& params, const GradSnapshot& s) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (s.present[i]) {
      params[i].tensor.set_grad(s.values[i]);
    } else {
      params[i].tensor.clear_grad();
    }
  }
}

std::vector<bool> selection_mask(const ParamSet& params, const std::vector<std::string>& only) {
  std::vector<bool> mask(params.size(), only.empty());
  for (const auto& name : only) {
    bool found = false;
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].name == name) {
        mask[i] = true;
        found = true;
      }
    }
    if (!found) throw std::invalid_argument("unknown parameter '" + name + "'");
  }
  return mask;
}

}  // namespace

SharpnessEstimate estimate_sharpness(ParamSet& params, Objective& objective, const SharpnessOptions& options) {
  if (!(options.rho >= 0.0)) throw std::invalid_argument("sharpness rho must be non-negative");
  if (options.probes == 0) throw std::invalid_argument("sharpness needs at least one probe");
  if (!(options.eta >= 0.0)) throw std::invalid_argument("sharpness eta must be non-negative");
  const auto mask = selection_mask(params, options.only);
  const auto snapshot = params.snapshot();
  const auto grads = save_grads(params);

  SharpnessEstimate est;
  est.rho = options.rho;
  est.method = options.method;
  est.adaptive = options.adaptive;
  est.base_loss = objective.loss();
  double best = 0.0;  // the zero probe

  auto evaluate_at = [&](const ParamVectors& eps) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto w = params[i].tensor.data();
      for (std::size_t j = 0; j < w.size(); ++j) w[j] = snapshot[i][j] + eps[i][j];
    }
    const double l = objective.loss();
    params.restore(snapshot);
    best = std::max(best, l - est.base_loss);
    ++est.num_probes;
  };

  if (options.rho > 0.0 && options.method != ProbeMethod::grad_ascent) {
    Rng rng = Rng::derive(options.seed, Stream::probe);
    for (std::size_t m = 0; m < options.probes; ++m) {
      ParamVectors dir(params.size());
      double norm2 = 0.0;
      for (std::size_t i = 0; i < params.size(); ++i) {
        dir[i].assign(params[i].tensor.numel(), 0.0);
        if (!mask[i]) continue;
        for (auto& z : dir[i]) {
          z = rng.normal();
          norm2 += z * z;
        }
      }
      const double norm = std::sqrt(norm2);
      if (norm == 0.0) continue;
      for (std::size_t i = 0; i < params.size(); ++i) {
        if (!mask[i]) continue;
        const auto scale = options.adaptive ? scaling_operator(params[i], options.eta)
                                            : std::vector<double>(dir[i].size(), 1.0);
        for (std::size_t j = 0; j < dir[i].size(); ++j) dir[i][j] = options.rho * scale[j] * dir[i][j] / norm;
      }
      evaluate_at(dir);
    }
  }
  if (options.rho > 0.0 && options.method != ProbeMethod::random_sphere) {
    objective.loss_and_grad();
    const auto eps = options.adaptive ? asam_epsilon(params, options.rho, options.eta, mask)
                                      : sam_epsilon(params, options.rho, mask);
    params.restore(snapshot);
    evaluate_at(eps);
  }
  if (options.rho == 0.0) est.num_probes = 1;  // only the zero probe is meaningful

  restore_grads(params, grads);
  est.value = best;
  return est;
}

SharpnessEstimate estimate_sharpness(Model& model, const Dataset& slice, const SharpnessOptions& options) {
  ModelObjective objective(model, slice);
  return estimate_sharpness(model.params(), objective, options);
}

Model rectifier_rescale(const Model& model, std::size_t weighted_index, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("rectifier rescale needs alpha > 0");
  const auto weighted = model.weighted_layers();
  if (weighted_index + 1 >= weighted.size()) {
    throw std::invalid_argument("rectifier rescale needs weighted layers " + std::to_string(weighted_index) + " and " +
                                std::to_string(weighted_index + 1) + ", model has " +
                                std::to_string(weighted.size()));
  }
  const auto first = weighted[weighted_index];
  const auto second = weighted[weighted_index + 1];
  bool saw_relu = false;
  for (std::size_t i = first + 1; i < second; ++i) {
    switch (model.layers()[i].kind) {
      case LayerKind::relu: saw_relu = true; break;
      case LayerKind::pool:
      case LayerKind::flatten: break;
      case LayerKind::batchnorm:
        throw std::invalid_argument("layer " + std::to_string(i) +
                                    " is batch norm, which absorbs the rescaling; rectifier rescale rejected");
      default:
        throw std::invalid_argument("layer " + std::to_string(i) + " (" + to_string(model.layers()[i].kind) +
                                    ") breaks the rectifier sandwich");
    }
  }
  if (!saw_relu) throw std::invalid_argument("no rectifier between the rescaled layers");

  Model out = model;
  auto scale_tensor = [&](const std::string& name, double factor) {
    if (auto* p = out.params().find(name)) {
      for (auto& v : p->tensor.data()) v *= factor;
    }
  };
  const auto l1 = "layer" + std::to_string(first) + ".";
  const auto l2 = "layer" + std::to_string(second) + ".";
  scale_tensor(l1 + "weight", alpha);
  scale_tensor(l1 + "bias", alpha);
  scale_tensor(l2 + "weight", 1.0 / alpha);
  return out;
}

double excess_kurtosis(std::span<const double> values) {
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (values.empty() || *lo == *hi) return std::numeric_limits<double>::quiet_NaN();
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double m2 = 0.0, m4 = 0.0;
  for (double v : values) {
    const double d = (v - mean) * (v - mean);
    m2 += d;
    m4 += d * d;
  }
  m2 /= n;
  m4 /= n;
  if (m2 == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return m4 / (m2 * m2) - 3.0;
}

Histogram make_histogram(std::span<const double> values, std::size_t num_bins) {
  if (num_bins < 2) throw std::invalid_argument("histogram needs at least 2 bins");
  if (values.empty()) throw std::invalid_argument("histogram of an empty tensor");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  Histogram h;
  h.edges.resize(num_bins + 1);
  for (std::size_t b = 0; b <= num_bins; ++b) {
    h.edges[b] = b == num_bins ? hi : lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(num_bins);
  }
  h.counts.assign(num_bins, 0);
  for (double v : values) {
    std::size_t b = 0;
    if (hi > lo) {
      b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(num_bins));
      b = std::min(b, num_bins - 1);
    }
    ++h.counts[b];
  }
  h.total = values.size();
  h.excess_kurtosis = excess_kurtosis(values);
  return h;
}

Histogram weight_histogram(const Model& model, const std::string& layer_name, std::size_t num_bins) {
  const Param* p = model.params().find(layer_name);
  if (!p) p = model.params().find(layer_name + ".weight");
  if (!p) throw std::invalid_argument("unknown layer '" + layer_name + "'");
  return make_histogram(p->tensor.data(), num_bins);
}

}  // namespace sharpkit
