// Copyright (c) 2026 The sharpkit authors
// SPDX-License-Identifier: Apache-2.0
//
// Loss-landscape sharpness probes, rectifier rescaling and weight histograms.
//
// Sharpness is max L(w + eps) - L(w) over the ball ||eps|| <= rho (or, for
// the adaptive variant, ||eps / T_w|| <= rho). The max is approximated from
// below by evaluating a fixed probe set: the zero perturbation, M random
// points on the sphere and the one-step gradient-ascent point.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sharpkit/data.hpp"
#include "sharpkit/model.hpp"

namespace sharpkit {

enum class ProbeMethod { random_sphere, grad_ascent, combined };
std::string to_string(ProbeMethod method);
ProbeMethod parse_probe_method(const std::string& name);

struct SharpnessOptions {
  double rho = 0.05;
  std::size_t probes = 64;
  bool adaptive = false;
  double eta = 0.0;  // T_w stabiliser for the adaptive ball
  ProbeMethod method = ProbeMethod::combined;
  std::uint64_t seed = 0;
  /// Names of the tensors to perturb; empty means all.
  std::vector<std::string> only;
};

struct SharpnessEstimate {
  double value = 0.0;  // loss units, >= 0
  double rho = 0.0;
  ProbeMethod method = ProbeMethod::combined;
  std::size_t num_probes = 0;  // non-zero probes evaluated
  bool adaptive = false;
  double base_loss = 0.0;

  /// value,rho,method,num_probes,adaptive,base_loss
  std::string to_csv_line() const;
};

/// Loss evaluated at the current values of some ParamSet.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual double loss() = 0;
  /// Loss, with gradients written into the parameters.
  virtual double loss_and_grad() = 0;
};

/// Mean eval-mode cross-entropy of a model on a fixed dataset slice.
class ModelObjective : public Objective {
 public:
  ModelObjective(Model& model, const Dataset& slice);
  double loss() override;
  double loss_and_grad() override;

 private:
  Model& model_;
  Tensor inputs_;
  std::vector<int> labels_;
};

/// Parameters (values and gradients) are bit-identical before and after.
SharpnessEstimate estimate_sharpness(ParamSet& params, Objective& objective, const SharpnessOptions& options);
SharpnessEstimate estimate_sharpness(Model& model, const Dataset& slice, const SharpnessOptions& options);

/// Function-preserving rescaling around a rectifier: the weights (and bias)
/// of the l-th dense/conv layer are multiplied by alpha and the weights of
/// the next one divided by alpha. `weighted_index` counts dense/conv layers
/// only. Rejects alpha <= 0, batch norm in between, or anything other than
/// relu/pool/flatten in between.
Model rectifier_rescale(const Model& model, std::size_t weighted_index, double alpha);

struct Histogram {
  std::vector<double> edges;  // bins + 1, spanning [min, max]
  std::vector<std::size_t> counts;
  double excess_kurtosis = 0.0;  // NaN when all values are equal
  std::size_t total = 0;
};

/// Fourth standardised moment minus 3 (population moments).
double excess_kurtosis(std::span<const double> values);
Histogram make_histogram(std::span<const double> values, std::size_t num_bins);
/// Histogram of a parameter tensor; `layer_name` is a parameter name such as
/// "layer0.weight" or a layer name such as "layer0" (its weight).
Histogram weight_histogram(const Model& model, const std::string& layer_name, std::size_t num_bins = 100);

}  // namespace sharpkit
