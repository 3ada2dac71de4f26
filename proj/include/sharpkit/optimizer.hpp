// Copyright (c) 2026 The sharpkit authors
// SPDX-License-Identifier: Apache-2.0
//
// SGD, SAM and ASAM update rules over a ParamSet, plus learning-rate
// schedules.
//
// All three share the heavy-ball step
//
//   v <- momentum * v + (g + weight_decay * w)
//   w <- w - lr * v
//
// SAM and ASAM are two-phase. *_perturb() reads the gradient at w, saves w,
// and moves the parameters to w + eps. The caller then recomputes gradients
// at the perturbed point, and *_update() restores w bit-exactly and applies
// the step above with those gradients. Momentum is touched only by the update
// phase. Norms are global: one L2 norm over every parameter jointly.
//
// ASAM rescales the ascent with T_w = |w| + eta, elementwise, on dense and
// conv weights; biases and batch-norm parameters use T_w = 1:
//
//   eps = rho * T_w^2 g / ||T_w g||

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sharpkit/model.hpp"

namespace sharpkit {

struct SgdConfig {
  double learning_rate = 0.01;
  double momentum = 0.0;
  double weight_decay = 0.0;

  void validate() const;
};

inline constexpr double kDefaultSamRho = 0.05;
inline constexpr double kDefaultAsamRho = 0.5;
inline constexpr double kDefaultAsamEta = 0.01;

struct SamConfig {
  double rho = kDefaultSamRho;
  SgdConfig base;

  void validate() const;
};

struct AsamConfig {
  double rho = kDefaultAsamRho;
  double eta = kDefaultAsamEta;
  SgdConfig base;

  void validate() const;
};

enum class Phase { ready, perturbed };

/// Out-of-order two-phase stepping.
class PhaseError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Per-parameter mutable optimizer state.
struct OptimizerState {
  std::vector<std::vector<double>> momentum;      // empty until the first step
  std::vector<std::vector<double>> epsilon;       // valid while perturbed
  std::vector<std::vector<double>> saved_params;  // w before the perturbation
  Phase phase = Phase::ready;
};

/// Parameter-shaped buffers, in ParamSet order.
using ParamVectors = std::vector<std::vector<double>>;

/// Global L2 norm over all buffers.
double global_norm(const ParamVectors& v);

/// T_w for one parameter tensor: |w| + eta for weights, ones otherwise.
std::vector<double> scaling_operator(const Param& p, double eta);

/// rho * g / ||g||, zero when ||g|| = 0. `mask[i] == false` excludes tensor i.
ParamVectors sam_epsilon(const ParamSet& params, double rho, const std::vector<bool>& mask = {});
/// rho * T^2 g / ||T g||, zero when ||T g|| = 0.
ParamVectors asam_epsilon(const ParamSet& params, double rho, double eta, const std::vector<bool>& mask = {});

void sgd_step(ParamSet& params, OptimizerState& state, const SgdConfig& cfg);
void sam_perturb(ParamSet& params, OptimizerState& state, const SamConfig& cfg);
void sam_update(ParamSet& params, OptimizerState& state, const SamConfig& cfg);
void asam_perturb(ParamSet& params, OptimizerState& state, const AsamConfig& cfg);
void asam_update(ParamSet& params, OptimizerState& state, const AsamConfig& cfg);

enum class OptimizerKind { sgd, sam, asam };
std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(const std::string& name);

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::sgd;
  double rho = 0.0;  // ignored by sgd
  double eta = kDefaultAsamEta;  // asam only
  SgdConfig base;
};

/// Drives one of the three rules through a gradient callback.
class Optimizer {
 public:
  /// Evaluates the loss at the current parameters and stores gradients in
  /// them. `pass` is 0 for the gradient at w, 1 for the one at w + eps.
  using GradientFn = std::function<double(int pass)>;

  explicit Optimizer(OptimizerSettings settings);

  /// One update; returns the loss from the first gradient evaluation.
  /// SGD evaluates `fn` once, SAM and ASAM exactly twice.
  double step(ParamSet& params, const GradientFn& fn);

  void set_learning_rate(double lr) { settings_.base.learning_rate = lr; }
  const OptimizerSettings& settings() const { return settings_; }
  const OptimizerState& state() const { return state_; }
  int evaluations_per_step() const { return settings_.kind == OptimizerKind::sgd ? 1 : 2; }

 private:
  OptimizerSettings settings_;
  OptimizerState state_;
};

enum class ScheduleKind { constant, cosine };
std::string to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(const std::string& name);

struct Schedule {
  ScheduleKind kind = ScheduleKind::constant;
  double base_lr = 0.01;
  double min_lr = 0.0;
  std::size_t total_epochs = 1;

  /// Learning rate at epoch t in [0, total_epochs]; cosine annealing is
  /// min + (base - min) * (1 + cos(pi t / T)) / 2.
  double lr_at(std::size_t t) const;
};

}  // namespace sharpkit
