// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <utility>

#include <gtest/gtest.h>

#include "bpfl/errors.hpp"
#include "bpfl/metrics.hpp"
#include "bpfl/ops.hpp"

namespace bpfl {
namespace {

// Expands a matrix into individual (truth, predicted) samples and counts per
// class directly from that list.
double brute_macro_f1(const ConfusionMatrix& cm) {
  const std::size_t c = cm.classes();
  std::vector<std::pair<std::size_t, std::size_t>> samples;
  for (std::size_t t = 0; t < c; ++t) {
    for (std::size_t p = 0; p < c; ++p) {
      for (std::uint64_t k = 0; k < cm(t, p); ++k) samples.emplace_back(t, p);
    }
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    double tp = 0, fp = 0, fn = 0;
    for (const auto& [t, p] : samples) {
      if (t == k && p == k) tp += 1;
      if (t != k && p == k) fp += 1;
      if (t == k && p != k) fn += 1;
    }
    const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    sum += precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
  }
  return sum / static_cast<double>(c);
}

double brute_dice(const std::vector<int>& a, const std::vector<int>& b) {
  int both = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    both += a[i] && b[i];
    na += a[i];
    nb += b[i];
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * both / (na + nb);
}

Tensor mask_tensor(const std::vector<int>& m) {
  std::vector<double> d(m.begin(), m.end());
  return Tensor({m.size()}, std::move(d));
}

ConfusionMatrix random_matrix(std::mt19937_64& rng) {
  const std::size_t c = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
  std::uniform_int_distribution<std::uint64_t> count(0, 12);
  std::bernoulli_distribution zero(0.3);
  std::vector<std::uint64_t> counts(c * c);
  for (auto& v : counts) v = zero(rng) ? 0 : count(rng);
  counts[0] += 1;
  return ConfusionMatrix(c, std::move(counts));
}

TEST(Accuracy, HandExample) {
  ConfusionMatrix cm(2, {3, 1, 2, 4});
  EXPECT_DOUBLE_EQ(accuracy(cm), 0.7);
}

TEST(MacroF1, ZeroSupportClassScoresZero) {
  ConfusionMatrix cm(2, {2, 0, 2, 0});
  EXPECT_NEAR(macro_f1(cm), 1.0 / 3.0, 1e-15);
  ConfusionMatrix one(3, {5, 0, 0, 0, 0, 0, 0, 0, 0});
  EXPECT_NEAR(macro_f1(one), 1.0 / 3.0, 1e-15);
}

TEST(MacroF1, PerfectPrediction) {
  const std::vector<int> y{0, 1, 2, 2, 1};
  EXPECT_DOUBLE_EQ(macro_f1(ConfusionMatrix::from_predictions(y, y, 3)), 1.0);
}

TEST(MacroF1, MatchesBruteForceOnRandomMatrices) {
  std::mt19937_64 rng(2026);
  for (int t = 0; t < 200; ++t) {
    const ConfusionMatrix cm = random_matrix(rng);
    EXPECT_NEAR(macro_f1(cm), brute_macro_f1(cm), 1e-12) << "matrix " << t;
  }
}

TEST(MacroF1, InvariantUnderClassRelabelling) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 50; ++t) {
    const ConfusionMatrix cm = random_matrix(rng);
    const std::size_t c = cm.classes();
    std::vector<std::size_t> perm(c);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    ConfusionMatrix permuted(c);
    for (std::size_t i = 0; i < c; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        if (cm(i, j) > 0) permuted.add(static_cast<int>(perm[i]), static_cast<int>(perm[j]), cm(i, j));
      }
    }
    EXPECT_NEAR(macro_f1(permuted), macro_f1(cm), 1e-12);
    EXPECT_DOUBLE_EQ(accuracy(permuted), accuracy(cm));
  }
}

TEST(MacroF1, Errors) {
  EXPECT_THROW(macro_f1(ConfusionMatrix(3)), DomainError);
  EXPECT_THROW(accuracy(ConfusionMatrix(3)), DomainError);
  const std::vector<int> a{0, 1};
  const std::vector<int> b{0};
  EXPECT_THROW(ConfusionMatrix::from_predictions(a, b, 2), StructuralError);
}

TEST(DiceScore, HandExamples) {
  EXPECT_DOUBLE_EQ(dice_score(mask_tensor({1, 1, 0, 0}), mask_tensor({1, 0, 1, 0})), 0.5);
  EXPECT_DOUBLE_EQ(dice_score(mask_tensor({0, 0, 0}), mask_tensor({0, 0, 0})), 1.0);
  EXPECT_DOUBLE_EQ(dice_score(mask_tensor({1, 0}), mask_tensor({0, 1})), 0.0);
}

TEST(DiceScore, Errors) {
  EXPECT_THROW(dice_score(mask_tensor({1, 0}), Tensor::vector({0.5, 1})), DomainError);
  EXPECT_THROW(dice_score(mask_tensor({1, 0}), mask_tensor({1, 0, 1})), StructuralError);
}

TEST(DiceScore, MatchesBruteForceAndLossIdentity) {
  std::mt19937_64 rng(99);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 40)(rng);
    const double density = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    std::bernoulli_distribution bit(density);
    std::vector<int> a(n), b(n);
    for (auto& v : a) v = bit(rng);
    for (auto& v : b) v = bit(rng);
    const double score = dice_score(mask_tensor(a), mask_tensor(b));
    EXPECT_NEAR(score, brute_dice(a, b), 1e-12);
    EXPECT_EQ(score, dice_score(mask_tensor(b), mask_tensor(a)));
    EXPECT_NEAR(score, 1.0 - dice_loss(mask_tensor(a), mask_tensor(b), 1e-9), 1e-9);
  }
}

}  // namespace
}  // namespace bpfl
