// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "bpfl/autograd.hpp"
#include "bpfl/param_set.hpp"

namespace bpfl {

enum class OptimizerKind { sgd, adam };

std::string to_string(OptimizerKind kind);

struct OptimizerState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  /// Adam moments for one parameter. `step` counts the updates that parameter
  /// has received and drives its bias correction.
  struct Moments {
    Tensor m;
    Tensor v;
    std::uint64_t step = 0;

    friend bool operator==(const Moments&, const Moments&) = default;
  };

  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-4;
  std::uint64_t step = 0;
  std::map<std::string, Moments> moments;

  OptimizerState() = default;
  OptimizerState(OptimizerKind k, double lr);

  void reset();

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

/// Applies one update to every trainable entry of `params` that has a
/// gradient. Frozen entries are never touched. Gradients for names absent
/// from `params` are ignored, so one gradient map can drive several sets.
void optimizer_step(ParamSet& params, const Gradients& grads, OptimizerState& state);

}  // namespace bpfl
