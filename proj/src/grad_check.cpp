// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#include "bpfl/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "bpfl/errors.hpp"

namespace bpfl {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kRelativeErrorFloor});
  return std::abs(analytic - numeric) / denom;
}

std::string GradCheckReport::summary() const {
  std::string out;
  for (const auto& p : params) {
    out += fmt::format("  {:<40} max_rel_err={:.3e} {}", p.name, p.max_relative_error, p.passed ? "ok" : "FAIL");
    if (!p.passed) {
      out += fmt::format(" (index {}: analytic {:.6e}, numeric {:.6e})", p.worst_index, p.worst_analytic, p.worst_numeric);
    }
    out += '\n';
  }
  return out;
}

namespace {

double evaluate(const LossBuilder& loss) {
  Tape tape;
  return loss(tape).value().item();
}

}  // namespace

GradCheckReport finite_difference_check(std::span<ParamSet* const> params, const LossBuilder& loss,
                                        double tolerance, double step,
                                        const std::function<void(Gradients&)>& tamper) {
  Gradients analytic;
  {
    Tape tape;
    Var l = loss(tape);
    analytic = tape.backward(l);
  }
  if (tamper) tamper(analytic);

  GradCheckReport report;
  for (ParamSet* set : params) {
    for (auto& entry : *set) {
      if (!entry.trainable) continue;
      ParamCheck check{entry.name};
      const bool has_grad = analytic.contains(entry.name);
      for (std::size_t i = 0; i < entry.value.size(); ++i) {
        const double original = entry.value[i];
        entry.value[i] = original + step;
        const double up = evaluate(loss);
        entry.value[i] = original - step;
        const double down = evaluate(loss);
        entry.value[i] = original;
        const double numeric = (up - down) / (2.0 * step);
        const double a = has_grad ? analytic.at(entry.name)[i] : 0.0;
        const double err = relative_error(a, numeric);
        if (err > check.max_relative_error || std::isnan(err)) {
          check.max_relative_error = err;
          check.worst_index = i;
          check.worst_analytic = a;
          check.worst_numeric = numeric;
        }
      }
      check.passed = check.max_relative_error < tolerance;
      report.max_relative_error = std::max(report.max_relative_error, check.max_relative_error);
      report.passed = report.passed && check.passed;
      report.params.push_back(std::move(check));
    }
  }
  return report;
}

}  // namespace bpfl
