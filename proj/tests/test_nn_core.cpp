// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "bpfl/autograd.hpp"
#include "bpfl/errors.hpp"
#include "bpfl/grad_check.hpp"
#include "bpfl/grad_suite.hpp"
#include "bpfl/layers.hpp"
#include "bpfl/ops.hpp"
#include "bpfl/optimizer.hpp"

namespace bpfl {
namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// --- Tensor -----------------------------------------------------------------

TEST(Tensor, RejectsZeroExtentsAndSizeMismatch) {
  EXPECT_THROW(Tensor({0, 3}), StructuralError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), StructuralError);
  const Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6U);
  EXPECT_EQ(t.rows(), 2U);
  EXPECT_EQ(t.cols(), 3U);
}

TEST(Tensor, RequireFiniteReportsNumericError) {
  Tensor t = Tensor::vector({1.0, std::nan("")});
  EXPECT_FALSE(t.all_finite());
  EXPECT_THROW(t.require_finite("t"), NumericError);
}

// --- dense_forward ------------------------------------------------------------

TEST(DenseForward, IdentityWeights) {
  const Tensor out = dense_forward(Tensor::matrix({{1, 2}}), Tensor::matrix({{1, 0}, {0, 1}}), Tensor::vector({0, 0}));
  EXPECT_EQ(out.shape(), (Shape{1, 2}));
  EXPECT_EQ(out[0], 1.0);
  EXPECT_EQ(out[1], 2.0);
}

TEST(DenseForward, HandArithmetic) {
  const Tensor out = dense_forward(Tensor::matrix({{1, 1}}), Tensor::matrix({{2}, {3}}), Tensor::vector({1}));
  EXPECT_EQ(out.item(), 6.0);
}

TEST(DenseForward, MatchesTripleLoop) {
  std::mt19937_64 rng(7);
  const Tensor x = random_tensor({3, 4}, rng);
  const Tensor w = random_tensor({4, 2}, rng);
  const Tensor b = random_tensor({2}, rng);
  const Tensor out = dense_forward(x, w, b);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t j = 0; j < 2; ++j) {
      double acc = b[j];
      for (std::size_t k = 0; k < 4; ++k) acc += x[r * 4 + k] * w[k * 2 + j];
      EXPECT_NEAR(out.at(r, j), acc, 1e-12);
    }
  }
}

TEST(DenseForward, ShapeMismatchNamesBothShapes) {
  try {
    dense_forward(Tensor({2, 3}), Tensor({4, 2}), Tensor({2}));
    FAIL() << "expected StructuralError";
  } catch (const StructuralError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2, 3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4, 2]"), std::string::npos) << msg;
  }
}

// --- softmax / losses -------------------------------------------------------

TEST(Softmax, ClosedForms) {
  const Tensor a = softmax(Tensor::vector({0, 0}));
  EXPECT_NEAR(a[0], 0.5, 1e-15);
  EXPECT_NEAR(a[1], 0.5, 1e-15);
  const Tensor b = softmax(Tensor::vector({std::log(2.0), 0}));
  EXPECT_NEAR(b[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(b[1], 1.0 / 3.0, 1e-15);
  const Tensor c = softmax(Tensor::vector({1000, 0}));
  EXPECT_TRUE(c.all_finite());
  EXPECT_NEAR(c[0], 1.0, 1e-15);
  EXPECT_NEAR(c[1], 0.0, 1e-15);
}

TEST(Softmax, RowsSumToOneForLargeInputs) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor z = random_tensor({4, 7}, rng, -1e3, 1e3);
    const Tensor p = softmax(z);
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 7; ++c) s += p.at(r, c);
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(CrossEntropy, UniformLogitsGiveLogC) {
  const std::vector<int> labels{0, 2};
  EXPECT_DOUBLE_EQ(cross_entropy_loss(Tensor({2, 3}, 0.25), labels), std::log(3.0));
}

TEST(CrossEntropy, NearPointMass) {
  const std::vector<int> labels{0};
  EXPECT_NEAR(cross_entropy_loss(Tensor::matrix({{10, -10}}), labels), 0.0, 1e-8);
}

TEST(CrossEntropy, MatchesPerSampleOracle) {
  std::mt19937_64 rng(3);
  const Tensor z = random_tensor({4, 3}, rng, -3, 3);
  const std::vector<int> labels{2, 0, 1, 1};
  double total = 0.0;
  for (std::size_t r = 0; r < 4; ++r) {
    double denom = 0.0;
    for (std::size_t c = 0; c < 3; ++c) denom += std::exp(z.at(r, c));
    total += -std::log(std::exp(z.at(r, static_cast<std::size_t>(labels[r]))) / denom);
  }
  EXPECT_NEAR(cross_entropy_loss(z, labels), total / 4.0, 1e-12);
}

TEST(CrossEntropy, NonNegativeAndRejectsBadLabels) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 100; ++t) {
    const std::vector<int> labels{0, 1, 2};
    EXPECT_GE(cross_entropy_loss(random_tensor({3, 3}, rng, -50, 50), labels), 0.0);
  }
  const std::vector<int> bad{3};
  EXPECT_THROW(cross_entropy_loss(Tensor({1, 3}), bad), StructuralError);
}

TEST(DiceLoss, PerfectOverlapAndClosedForm) {
  const Tensor ones({1, 4}, 1.0);
  EXPECT_LE(dice_loss(ones, ones), 1.0 / (2.0 * 4 + 1));
  EXPECT_NEAR(dice_loss(Tensor({1, 4}, 0.0), ones), 0.8, 1e-15);
}

TEST(DiceLoss, MatchesSetFormulaOracle) {
  std::mt19937_64 rng(9);
  std::bernoulli_distribution coin(0.4);
  for (int t = 0; t < 50; ++t) {
    Tensor pred({1, 16});
    Tensor target({1, 16});
    double inter = 0.0, a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < 16; ++i) {
      pred[i] = coin(rng) ? 1.0 : 0.0;
      target[i] = coin(rng) ? 1.0 : 0.0;
      inter += pred[i] * target[i];
      a += pred[i];
      b += target[i];
    }
    if (a + b == 0) continue;
    EXPECT_NEAR(1.0 - dice_loss(pred, target, 1e-12), 2.0 * inter / (a + b), 1e-10);
  }
}

TEST(DiceLoss, SoftMaskMatchesDirectFormula) {
  std::mt19937_64 rng(10);
  const Tensor pred = random_tensor({3, 8}, rng, 0.0, 1.0);
  Tensor target({3, 8});
  std::bernoulli_distribution coin(0.5);
  for (auto& v : target.data()) v = coin(rng) ? 1.0 : 0.0;
  double expected = 0.0;
  for (std::size_t r = 0; r < 3; ++r) {
    double inter = 0.0, sp = 0.0, st = 0.0;
    for (std::size_t c = 0; c < 8; ++c) {
      inter += pred.at(r, c) * target.at(r, c);
      sp += pred.at(r, c);
      st += target.at(r, c);
    }
    expected += 1.0 - (2.0 * inter + 1.0) / (sp + st + 1.0);
  }
  EXPECT_NEAR(dice_loss(pred, target), expected / 3.0, 1e-12);
}

TEST(DiceLoss, RangeMonotonicityAndDomain) {
  // Fixed marginals: sum(pred) = 2, sum(target) = 2; overlap grows 0 -> 1 -> 2.
  const Tensor target = Tensor::matrix({{1, 1, 0, 0}});
  const double l0 = dice_loss(Tensor::matrix({{0, 0, 1, 1}}), target);
  const double l1 = dice_loss(Tensor::matrix({{1, 0, 1, 0}}), target);
  const double l2 = dice_loss(Tensor::matrix({{1, 1, 0, 0}}), target);
  EXPECT_GE(l0, l1);
  EXPECT_GE(l1, l2);
  for (double l : {l0, l1, l2}) {
    EXPECT_GE(l, 0.0);
    EXPECT_LT(l, 1.0);
  }
  EXPECT_THROW(dice_loss(Tensor::matrix({{1.5, 0, 0, 0}}), target), DomainError);
  EXPECT_THROW(dice_loss(Tensor::matrix({{1, 0, 0, 0}}), Tensor::matrix({{0.5, 0, 0, 0}})), DomainError);
}

// --- autograd -----------------------------------------------------------------

TEST(Autograd, LinearScalar) {
  ParamSet p;
  p.add("w", Tensor::scalar(2.0));
  Tape tape;
  Var loss = sum(mul(tape.param(p, "w"), tape.constant(Tensor::scalar(3.0))));
  const Gradients g = tape.backward(loss);
  EXPECT_EQ(g.at("w").item(), 3.0);
}

TEST(Autograd, FrozenParameterHasNoGradient) {
  ParamSet p;
  p.add("w", Tensor::scalar(2.0));
  p.add("v", Tensor::scalar(1.0), false);
  Tape tape;
  Var loss = sum(mul(tape.param(p, "w"), tape.param(p, "v")));
  const Gradients g = tape.backward(loss);
  EXPECT_TRUE(g.contains("w"));
  EXPECT_FALSE(g.contains("v"));
}

TEST(Autograd, RepeatedReadsAccumulate) {
  ParamSet p;
  p.add("w", Tensor::scalar(3.0));
  Tape tape;
  Var w1 = tape.param(p, "w");
  Var w2 = tape.param(p, "w");
  const Gradients g = tape.backward(sum(mul(w1, w2)));
  EXPECT_DOUBLE_EQ(g.at("w").item(), 6.0);
}

TEST(Autograd, UsageErrors) {
  Tape empty;
  EXPECT_THROW(empty.backward(Var{}), UsageError);

  ParamSet p;
  p.add("w", Tensor::vector({1, 2}));
  Tape tape;
  Var w = tape.param(p, "w");
  EXPECT_THROW(tape.backward(w), UsageError);  // not a scalar
  Var s = sum(w);
  tape.backward(s);
  EXPECT_THROW(tape.backward(s), UsageError);  // second call

  Tape other;
  other.constant(Tensor::scalar(1.0));
  EXPECT_THROW(other.backward(s), UsageError);  // foreign handle
}

TEST(GradCheck, LinearModelIsExact) {
  std::mt19937_64 rng(1);
  Network net("lin", {{LayerKind::dense, 3, 2}}, 4);
  const Tensor x = random_tensor({4, 3}, rng);
  const Tensor r = random_tensor({4, 2}, rng);
  std::vector<ParamSet*> sets{&net.params()};
  const auto report = finite_difference_check(
      sets, [&](Tape& t) { return sum(mul(net.forward(t, t.constant(x)), t.constant(r))); }, 1e-9);
  EXPECT_TRUE(report.passed) << report.summary();
  EXPECT_LT(report.max_relative_error, 1e-9);
}

TEST(GradCheck, DenseReluCrossEntropyStack) {
  std::mt19937_64 rng(2);
  Network net("mlp", {{LayerKind::dense, 5, 6}, {LayerKind::relu, 6, 6}, {LayerKind::dense, 6, 3}}, 8);
  const Tensor x = random_tensor({6, 5}, rng, -2, 2);
  const std::vector<int> labels{0, 1, 2, 2, 1, 0};
  std::vector<ParamSet*> sets{&net.params()};
  const auto report = finite_difference_check(
      sets, [&](Tape& t) { return cross_entropy(net.forward(t, t.constant(x)), labels); }, 1e-4);
  EXPECT_TRUE(report.passed) << report.summary();
}

TEST(GradCheck, CorruptedGradientIsReported) {
  std::mt19937_64 rng(3);
  Network net("lin", {{LayerKind::dense, 3, 2}}, 4);
  const Tensor x = random_tensor({4, 3}, rng);
  const std::vector<int> labels{0, 1, 1, 0};
  std::vector<ParamSet*> sets{&net.params()};
  const auto report = finite_difference_check(
      sets, [&](Tape& t) { return cross_entropy(net.forward(t, t.constant(x)), labels); }, 1e-4,
      kFiniteDifferenceStep, [](Gradients& g) {
        for (auto& v : g.at("lin.fc0.weight").data()) v *= 2.0;
      });
  EXPECT_FALSE(report.passed);
  for (const auto& p : report.params) EXPECT_EQ(p.passed, p.name != "lin.fc0.weight") << p.name;
}

TEST(GradCheck, EveryLayerKindOverTwentySeeds) {
  for (const auto& name : {"dense", "relu", "softmax_output"}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto report = run_grad_check_case(name, seed);
      EXPECT_TRUE(report.passed) << name << " seed " << seed << "\n" << report.summary();
    }
  }
}

// --- layers -------------------------------------------------------------------

TEST(Layers, ParameterCountFormula) {
  EXPECT_EQ(parameter_count({LayerKind::dense, 4, 3}), 15U);
  EXPECT_EQ(parameter_count({LayerKind::relu, 4, 4}), 0U);
  Network net("n", body_layers(10, {7, 5}), 1);
  EXPECT_EQ(net.parameter_count(), 10U * 7 + 7 + 7 * 5 + 5);
}

TEST(Layers, ChainValidation) {
  EXPECT_THROW(validate_chain({{LayerKind::dense, 4, 3}, {LayerKind::dense, 2, 1}}), StructuralError);
  EXPECT_THROW(validate_chain({{LayerKind::relu, 4, 3}}), StructuralError);
  EXPECT_NO_THROW(validate_chain(head_layers(4, 3)));
}

TEST(Layers, InitBoundsAndZeroBias) {
  Network net("n", body_layers(16, {8}), 99);
  const double lim = std::sqrt(1.0 / 16.0);
  for (double v : net.params().at("n.fc0.weight").data()) EXPECT_LE(std::abs(v), lim);
  for (double v : net.params().at("n.fc0.bias").data()) EXPECT_EQ(v, 0.0);
  Network same("n", body_layers(16, {8}), 99);
  EXPECT_TRUE(bit_equal(net.params(), same.params()));
}

// --- optimizer ----------------------------------------------------------------

TEST(Optimizer, SgdStep) {
  ParamSet p;
  p.add("w", Tensor::scalar(1.0));
  Gradients g;
  g.add("w", Tensor::scalar(2.0));
  OptimizerState s(OptimizerKind::sgd, 0.1);
  optimizer_step(p, g, s);
  EXPECT_NEAR(p.at("w").item(), 0.8, 1e-15);
  EXPECT_EQ(s.step, 1U);
}

TEST(Optimizer, AdamFirstStepIsLearningRateSized) {
  for (double scale : {1e-3, 1.0, 1e3}) {
    ParamSet p;
    p.add("w", Tensor({5}, 0.0));
    Gradients g;
    g.add("w", Tensor({5}, scale));
    OptimizerState s(OptimizerKind::adam, 1e-2);
    optimizer_step(p, g, s);
    for (double v : p.at("w").data()) EXPECT_NEAR(v, -1e-2, 1e-7) << scale;
  }
}

TEST(Optimizer, AdamMatchesReferenceRecurrence) {
  ParamSet p;
  p.add("w", Tensor::scalar(0.5));
  OptimizerState s(OptimizerKind::adam, 0.01);
  double w = 0.5, m = 0.0, v = 0.0;
  for (int t = 1; t <= 10; ++t) {
    const double grad = std::sin(t) + 0.3;
    Gradients g;
    g.add("w", Tensor::scalar(grad));
    optimizer_step(p, g, s);
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad * grad;
    const double mh = m / (1.0 - std::pow(0.9, t));
    const double vh = v / (1.0 - std::pow(0.999, t));
    w -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(p.at("w").item(), w, 1e-14);
  }
}

TEST(Optimizer, FrozenEntryUntouchedForHundredSteps) {
  ParamSet p;
  p.add("w", Tensor::vector({0.1, -0.2}));
  p.add("frozen", Tensor::vector({0.3, 0.4}), false);
  const Tensor before = p.at("frozen");
  Gradients g;
  g.add("w", Tensor::vector({1, 1}));
  g.add("frozen", Tensor::vector({1, 1}));
  OptimizerState s(OptimizerKind::adam, 0.1);
  for (int i = 0; i < 100; ++i) optimizer_step(p, g, s);
  EXPECT_TRUE(bit_equal(p.at("frozen"), before));
  EXPECT_NE(p.at("w")[0], 0.1);
}

TEST(Optimizer, ShapeMismatchAndBadRate) {
  ParamSet p;
  p.add("w", Tensor::vector({1, 2}));
  Gradients g;
  g.add("w", Tensor::vector({1, 2, 3}));
  OptimizerState s(OptimizerKind::sgd, 0.1);
  EXPECT_THROW(optimizer_step(p, g, s), StructuralError);
  EXPECT_THROW(OptimizerState(OptimizerKind::adam, 0.0), ConfigError);
}

}  // namespace
}  // namespace bpfl
