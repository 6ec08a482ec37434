// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#include "bpfl/optimizer.hpp"

#include <cmath>

#include <fmt/format.h>

#include "bpfl/errors.hpp"

namespace bpfl {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerState::OptimizerState(OptimizerKind k, double lr) : kind(k), learning_rate(lr) {
  if (!(lr > 0.0)) throw ConfigError(fmt::format("learning rate must be positive, got {}", lr));
}

void OptimizerState::reset() {
  step = 0;
  moments.clear();
}

void optimizer_step(ParamSet& params, const Gradients& grads, OptimizerState& state) {
  const double lr = state.learning_rate;
  for (auto& entry : params) {
    if (!entry.trainable || !grads.contains(entry.name)) continue;
    const Tensor& g = grads.at(entry.name);
    require_same_shape(entry.value, g, fmt::format("optimizer_step '{}'", entry.name));
    Tensor& p = entry.value;
    if (state.kind == OptimizerKind::sgd) {
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
    } else {
      auto [it, inserted] = state.moments.try_emplace(entry.name);
      auto& mo = it->second;
      if (inserted) {
        mo.m = Tensor(p.shape(), 0.0);
        mo.v = Tensor(p.shape(), 0.0);
      }
      require_same_shape(mo.m, p, fmt::format("adam moments '{}'", entry.name));
      ++mo.step;
      const double t = static_cast<double>(mo.step);
      const double c1 = 1.0 - std::pow(OptimizerState::kBeta1, t);
      const double c2 = 1.0 - std::pow(OptimizerState::kBeta2, t);
      for (std::size_t i = 0; i < p.size(); ++i) {
        mo.m[i] = OptimizerState::kBeta1 * mo.m[i] + (1.0 - OptimizerState::kBeta1) * g[i];
        mo.v[i] = OptimizerState::kBeta2 * mo.v[i] + (1.0 - OptimizerState::kBeta2) * g[i] * g[i];
        const double m_hat = mo.m[i] / c1;
        const double v_hat = mo.v[i] / c2;
        p[i] -= lr * m_hat / (std::sqrt(v_hat) + OptimizerState::kEpsilon);
      }
    }
    p.require_finite(fmt::format("parameter '{}' after update", entry.name));
  }
  ++state.step;
}

}  // namespace bpfl
