// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bpfl/autograd.hpp"
#include "bpfl/param_set.hpp"

namespace bpfl {

inline constexpr double kFiniteDifferenceStep = 1e-5;

/// Denominator floor for the relative error; below it the comparison is
/// effectively absolute, which keeps round-off on near-zero gradients from
/// registering as failures.
inline constexpr double kRelativeErrorFloor = 1e-6;

/// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric);

struct ParamCheck {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double max_relative_error = 0.0;
  bool passed = true;

  std::string summary() const;
};

/// Builds the scalar loss on a fresh tape from the current parameter values.
using LossBuilder = std::function<Var(Tape&)>;

/// Compares analytic gradients with central differences for every trainable
/// entry in `params`. `tamper`, when set, is applied to the analytic
/// gradients before comparison (negative controls).
GradCheckReport finite_difference_check(std::span<ParamSet* const> params, const LossBuilder& loss,
                                        double tolerance, double step = kFiniteDifferenceStep,
                                        const std::function<void(Gradients&)>& tamper = {});

}  // namespace bpfl
