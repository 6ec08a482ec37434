// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "bpfl/tensor.hpp"

namespace bpfl {

/// Counts indexed [true class][predicted class].
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes);
  ConfusionMatrix(std::size_t classes, std::vector<std::uint64_t> counts);

  static ConfusionMatrix from_predictions(std::span<const int> truth, std::span<const int> predicted,
                                          std::size_t classes);

  void add(int truth, int predicted, std::uint64_t count = 1);

  std::size_t classes() const { return classes_; }
  std::uint64_t operator()(std::size_t truth, std::size_t predicted) const {
    return counts_[truth * classes_ + predicted];
  }
  std::uint64_t total() const;
  std::uint64_t trace() const;
  std::uint64_t row_sum(std::size_t truth) const;
  std::uint64_t col_sum(std::size_t predicted) const;

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

/// trace / total. Throws DomainError on an empty matrix.
double accuracy(const ConfusionMatrix& cm);

/// Unweighted mean of per-class F1 = 2PR / (P + R). Classes with no true and
/// no predicted samples score 0. Throws DomainError on an empty matrix.
double macro_f1(const ConfusionMatrix& cm);

/// 2|A ∩ B| / (|A| + |B|) over binary masks; two empty masks score 1.
/// Throws DomainError on non-binary input, StructuralError on shape mismatch.
double dice_score(const Tensor& pred_mask, const Tensor& true_mask);

}  // namespace bpfl
