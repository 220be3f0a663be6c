#pragma once

#include "mrvpc/nncore/param_store.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace mrvpc::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m, v;
  std::int64_t step = 0;
};

/// One AdamW update: decoupled decay p -= lr*wd*p, then the bias-corrected
/// moment step. Lazily sizes the state on first use.
template <typename T>
void adam_step(ParamStore<T>& params, AdamState<T>& state, double lr, double weight_decay,
               const AdamConfig& cfg = {}) {
  if (lr < 0) throw std::invalid_argument("adam_step: negative learning rate");
  if (params.empty()) return;
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), {});
    state.v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].value.size(), T(0));
      state.v[i].assign(params[i].value.size(), T(0));
    }
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const T bc1 = static_cast<T>(1.0 - std::pow(cfg.beta1, t));
  const T bc2 = static_cast<T>(1.0 - std::pow(cfg.beta2, t));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T eps = static_cast<T>(cfg.eps);
  const T step_lr = static_cast<T>(lr);
  const T decay = static_cast<T>(1.0 - lr * weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].value.values;
    const auto& g = params[i].grad.values;
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      p[j] *= decay;
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      const T mhat = m[j] / bc1;
      const T vhat = v[j] / bc2;
      p[j] -= step_lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

struct ScheduleSpec {
  double base_lr = 2e-4;
  std::int64_t total_steps = 1;
  std::int64_t warmup_steps = 0;

  void validate() const {
    if (total_steps <= 0) throw std::invalid_argument("schedule: total_steps must be > 0");
    if (warmup_steps < 0 || warmup_steps >= total_steps)
      throw std::invalid_argument("schedule: warmup_steps must lie in [0, total_steps)");
  }
};

/// Linear warmup from 0, then half-cosine decay to 0 at total_steps. Steps past
/// the end clamp to the final value.
inline double cosine_lr(std::int64_t step, const ScheduleSpec& spec) {
  spec.validate();
  if (step < 0) throw std::invalid_argument("cosine_lr: negative step");
  if (step > spec.total_steps) step = spec.total_steps;
  if (step < spec.warmup_steps)
    return spec.base_lr * static_cast<double>(step) / static_cast<double>(spec.warmup_steps);
  const std::int64_t span = spec.total_steps - spec.warmup_steps;
  const std::int64_t done = step - spec.warmup_steps;
  const double progress = static_cast<double>(done) / static_cast<double>(span);
  return spec.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
double global_grad_norm(const ParamStore<T>& params) {
  double sq = 0;
  for (const auto& e : params)
    for (T g : e.grad.values) sq += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(sq);
}

/// Rescales all gradients so their global L2 norm is at most max_norm.
/// Returns the factor applied (1 when untouched).
template <typename T>
double clip_global_norm(ParamStore<T>& params, double max_norm = 1.0) {
  if (max_norm <= 0) throw std::invalid_argument("clip_global_norm: max_norm must be > 0");
  const double norm = global_grad_norm(params);
  if (!(norm > max_norm)) return 1.0;
  const double scale = max_norm / norm;
  for (auto& e : params)
    for (T& g : e.grad.values) g = static_cast<T>(g * scale);
  return scale;
}

}  // namespace mrvpc::nn
