// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "bpfl/grad_check.hpp"

namespace bpfl {

struct GradSuiteCase {
  std::string name;
  std::uint64_t seed = 0;
  GradCheckReport report;
};

struct GradSuiteResult {
  std::vector<GradSuiteCase> cases;
  double max_relative_error = 0.0;
  bool passed = true;

  /// One line per case name with its worst error over all seeds.
  std::string summary() const;
};

/// Case names, in run order: dense, relu, softmax_output, cross_entropy,
/// dice_loss, fusion, local_stage_loss, global_stage_loss.
std::vector<std::string> grad_suite_cases();

/// Runs every case for seeds 0..seeds-1.
GradSuiteResult run_grad_check_suite(std::size_t seeds = 20, double tolerance = 1e-4);

/// Runs one case for one seed; throws UsageError on an unknown name.
GradCheckReport run_grad_check_case(const std::string& name, std::uint64_t seed, double tolerance = 1e-4);

}  // namespace bpfl
