// Copyright (c) 2026 The sharpkit authors
// SPDX-License-Identifier: Apache-2.0

#include "sharpkit/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace sharpkit {

void SgdConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight decay must be non-negative");
}

void SamConfig::validate() const {
  if (!(rho >= 0.0)) throw std::invalid_argument("rho must be non-negative");
  base.validate();
}

void AsamConfig::validate() const {
  if (!(rho >= 0.0)) throw std::invalid_argument("rho must be non-negative");
  if (!(eta >= 0.0)) throw std::invalid_argument("eta must be non-negative");
  base.validate();
}

double global_norm(const ParamVectors& v) {
  double s = 0.0;
  for (const auto& t : v)
    for (double x : t) s += x * x;
  return std::sqrt(s);
}

std::vector<double> scaling_operator(const Param& p, double eta) {
  std::vector<double> t(p.tensor.numel(), 1.0);
  if (p.kind == ParamKind::weight) {
    const auto w = p.tensor.data();
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::abs(w[i]) + eta;
  }
  return t;
}

namespace {

void require_grads(const ParamSet& params) {
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) throw std::logic_error("missing gradient for " + p.name);
  }
}

bool selected(const std::vector<bool>& mask, std::size_t i) { return mask.empty() || mask.at(i); }

// eps = rho * scale^2 g / ||scale g|| with scale = 1 when `eta` is unset.
ParamVectors scaled_epsilon(const ParamSet& params, double rho, const double* eta, const std::vector<bool>& mask) {
  require_grads(params);
  if (!mask.empty() && mask.size() != params.size()) throw ShapeError("parameter mask size mismatch");
  ParamVectors scaled_grad(params.size());
  ParamVectors scale(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    const auto g = p.tensor.grad();
    scale[i] = eta ? scaling_operator(p, *eta) : std::vector<double>(g.size(), 1.0);
    scaled_grad[i].assign(g.size(), 0.0);
    if (!selected(mask, i)) continue;
    for (std::size_t j = 0; j < g.size(); ++j) scaled_grad[i][j] = scale[i][j] * g[j];
  }
  const double norm = global_norm(scaled_grad);
  ParamVectors eps(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    eps[i].assign(scaled_grad[i].size(), 0.0);
    if (norm == 0.0 || rho == 0.0) continue;
    for (std::size_t j = 0; j < eps[i].size(); ++j) eps[i][j] = rho * scale[i][j] * scaled_grad[i][j] / norm;
  }
  return eps;
}

void ensure_momentum(const ParamSet& params, OptimizerState& state) {
  if (state.momentum.size() == params.size()) return;
  state.momentum.assign(params.size(), {});
  for (std::size_t i = 0; i < params.size(); ++i) state.momentum[i].assign(params[i].tensor.numel(), 0.0);
}

// Heavy-ball step with the current gradients.
void apply_step(ParamSet& params, OptimizerState& state, const SgdConfig& cfg) {
  ensure_momentum(params, state);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].tensor.data();
    const auto g = params[i].tensor.grad();
    auto& v = state.momentum[i];
    if (g.size() != w.size() || v.size() != w.size()) throw ShapeError("gradient shape mismatch for " + params[i].name);
    for (std::size_t j = 0; j < w.size(); ++j) {
      v[j] = cfg.momentum * v[j] + (g[j] + cfg.weight_decay * w[j]);
      w[j] -= cfg.learning_rate * v[j];
    }
  }
}

void perturb(ParamSet& params, OptimizerState& state, ParamVectors eps) {
  if (state.phase != Phase::ready) throw PhaseError("perturb called while already perturbed");
  state.saved_params = params.snapshot();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].tensor.data();
    for (std::size_t j = 0; j < w.size(); ++j) w[j] += eps[i][j];
  }
  state.epsilon = std::move(eps);
  state.phase = Phase::perturbed;
}

void update(ParamSet& params, OptimizerState& state, const SgdConfig& cfg) {
  if (state.phase != Phase::perturbed) throw PhaseError("update called without a preceding perturb");
  require_grads(params);
  params.restore(state.saved_params);
  apply_step(params, state, cfg);
  state.phase = Phase::ready;
}

}  // namespace

ParamVectors sam_epsilon(const ParamSet& params, double rho, const std::vector<bool>& mask) {
  return scaled_epsilon(params, rho, nullptr, mask);
}

ParamVectors asam_epsilon(const ParamSet& params, double rho, double eta, const std::vector<bool>& mask) {
  return scaled_epsilon(params, rho, &eta, mask);
}

void sgd_step(ParamSet& params, OptimizerState& state, const SgdConfig& cfg) {
  if (state.phase != Phase::ready) throw PhaseError("sgd_step called while perturbed");
  require_grads(params);
  apply_step(params, state, cfg);
}

void sam_perturb(ParamSet& params, OptimizerState& state, const SamConfig& cfg) {
  if (state.phase != Phase::ready) throw PhaseError("sam_perturb called while already perturbed");
  perturb(params, state, sam_epsilon(params, cfg.rho));
}

void sam_update(ParamSet& params, OptimizerState& state, const SamConfig& cfg) { update(params, state, cfg.base); }

void asam_perturb(ParamSet& params, OptimizerState& state, const AsamConfig& cfg) {
  if (state.phase != Phase::ready) throw PhaseError("asam_perturb called while already perturbed");
  perturb(params, state, asam_epsilon(params, cfg.rho, cfg.eta));
}

void asam_update(ParamSet& params, OptimizerState& state, const AsamConfig& cfg) { update(params, state, cfg.base); }

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::sam: return "sam";
    case OptimizerKind::asam: return "asam";
  }
  return "?";
}

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "sam") return OptimizerKind::sam;
  if (name == "asam") return OptimizerKind::asam;
  throw std::invalid_argument("unknown optimizer '" + name + "' (expected sgd, sam or asam)");
}

Optimizer::Optimizer(OptimizerSettings settings) : settings_(settings) {
  settings_.base.validate();
  if (!(settings_.rho >= 0.0)) throw std::invalid_argument("rho must be non-negative");
  if (!(settings_.eta >= 0.0)) throw std::invalid_argument("eta must be non-negative");
}

double Optimizer::step(ParamSet& params, const GradientFn& fn) {
  const double loss = fn(0);
  switch (settings_.kind) {
    case OptimizerKind::sgd:
      sgd_step(params, state_, settings_.base);
      break;
    case OptimizerKind::sam: {
      const SamConfig cfg{settings_.rho, settings_.base};
      sam_perturb(params, state_, cfg);
      fn(1);
      sam_update(params, state_, cfg);
      break;
    }
    case OptimizerKind::asam: {
      const AsamConfig cfg{settings_.rho, settings_.eta, settings_.base};
      asam_perturb(params, state_, cfg);
      fn(1);
      asam_update(params, state_, cfg);
      break;
    }
  }
  return loss;
}

std::string to_string(ScheduleKind kind) { return kind == ScheduleKind::cosine ? "cosine" : "constant"; }

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "constant") return ScheduleKind::constant;
  if (name == "cosine") return ScheduleKind::cosine;
  throw std::invalid_argument("unknown schedule '" + name + "' (expected constant or cosine)");
}

double Schedule::lr_at(std::size_t t) const {
  if (t > total_epochs) {
    throw std::out_of_range("schedule epoch " + std::to_string(t) + " exceeds total " + std::to_string(total_epochs));
  }
  if (kind == ScheduleKind::constant || t == 0) return base_lr;
  if (t == total_epochs) return min_lr;
  const double phase = std::numbers::pi * static_cast<double>(t) / static_cast<double>(total_epochs);
  const double lr = min_lr + 0.5 * (base_lr - min_lr) * (1.0 + std::cos(phase));
  return std::clamp(lr, min_lr, base_lr);
}

}  // namespace sharpkit
