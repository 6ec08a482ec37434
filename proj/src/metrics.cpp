// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#include "bpfl/metrics.hpp"

#include <numeric>

#include <fmt/format.h>

#include "bpfl/errors.hpp"

namespace bpfl {

ConfusionMatrix::ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {
  if (classes == 0) throw DomainError("confusion matrix needs at least one class");
}

ConfusionMatrix::ConfusionMatrix(std::size_t classes, std::vector<std::uint64_t> counts)
    : classes_(classes), counts_(std::move(counts)) {
  if (classes == 0) throw DomainError("confusion matrix needs at least one class");
  if (counts_.size() != classes * classes) {
    throw StructuralError(fmt::format("confusion matrix of {} classes needs {} counts, got {}", classes,
                                      classes * classes, counts_.size()));
  }
}

ConfusionMatrix ConfusionMatrix::from_predictions(std::span<const int> truth, std::span<const int> predicted,
                                                  std::size_t classes) {
  if (truth.size() != predicted.size()) {
    throw StructuralError(fmt::format("{} labels vs {} predictions", truth.size(), predicted.size()));
  }
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
  return cm;
}

void ConfusionMatrix::add(int truth, int predicted, std::uint64_t count) {
  const auto c = static_cast<int>(classes_);
  if (truth < 0 || truth >= c || predicted < 0 || predicted >= c) {
    throw DomainError(fmt::format("class pair ({}, {}) outside [0, {})", truth, predicted, classes_));
  }
  counts_[static_cast<std::size_t>(truth) * classes_ + static_cast<std::size_t>(predicted)] += count;
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t t = 0;
  for (std::size_t c = 0; c < classes_; ++c) t += (*this)(c, c);
  return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < classes_; ++p) s += (*this)(truth, p);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t predicted) const {
  std::uint64_t s = 0;
  for (std::size_t t = 0; t < classes_; ++t) s += (*this)(t, predicted);
  return s;
}

double accuracy(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) throw DomainError("accuracy of an empty confusion matrix");
  return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

double macro_f1(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw DomainError("macro F1 of an empty confusion matrix");
  double sum = 0.0;
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    const auto tp = static_cast<double>(cm(c, c));
    const auto predicted = static_cast<double>(cm.col_sum(c));
    const auto actual = static_cast<double>(cm.row_sum(c));
    const double precision = predicted > 0 ? tp / predicted : 0.0;
    const double recall = actual > 0 ? tp / actual : 0.0;
    if (precision + recall > 0.0) sum += 2.0 * precision * recall / (precision + recall);
  }
  return sum / static_cast<double>(cm.classes());
}

double dice_score(const Tensor& pred_mask, const Tensor& true_mask) {
  require_same_shape(pred_mask, true_mask, "dice_score");
  std::uint64_t inter = 0;
  std::uint64_t sizes = 0;
  for (std::size_t i = 0; i < pred_mask.size(); ++i) {
    const double p = pred_mask[i];
    const double t = true_mask[i];
    if ((p != 0.0 && p != 1.0) || (t != 0.0 && t != 1.0)) {
      throw DomainError(fmt::format("dice_score: non-binary mask value at {}", i));
    }
    inter += (p == 1.0 && t == 1.0) ? 1 : 0;
    sizes += static_cast<std::uint64_t>(p) + static_cast<std::uint64_t>(t);
  }
  if (sizes == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(sizes);
}

}  // namespace bpfl
