// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "bpfl/errors.hpp"
#include "bpfl/fusion.hpp"
#include "bpfl/grad_suite.hpp"
#include "bpfl/ops.hpp"

namespace bpfl {
namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

TEST(Resample, IdentityWhenDimsMatch) {
  std::mt19937_64 rng(1);
  FusionProjection proj(4, 4, 7);
  const Tensor x = random_tensor({3, 4}, rng);
  EXPECT_TRUE(bit_equal(resample_global(x, proj), x));
  EXPECT_TRUE(bit_equal(resample_fused(x, proj), x));
}

TEST(Resample, HandSetWeightsMatchDense) {
  FusionProjection proj(2, 3, 1);
  proj.params().at(proj.up_weight()) = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  proj.params().at(proj.up_bias()) = Tensor::vector({0.5, -0.5, 1});
  const Tensor x = Tensor::matrix({{1, -1}, {0.5, 2}});
  const Tensor out = resample_global(x, proj);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t j = 0; j < 3; ++j) {
      const double w0 = proj.params().at(proj.up_weight()).at(0, j);
      const double w1 = proj.params().at(proj.up_weight()).at(1, j);
      EXPECT_NEAR(out.at(r, j), x.at(r, 0) * w0 + x.at(r, 1) * w1 + proj.params().at(proj.up_bias())[j], 1e-12);
    }
  }
}

TEST(Resample, ZeroInputGivesBias) {
  FusionProjection proj(3, 5, 2);
  proj.params().at(proj.up_bias()) = Tensor::vector({1, 2, 3, 4, 5});
  proj.params().at(proj.down_bias()) = Tensor::vector({-1, -2, -3});
  const Tensor up = resample_global(Tensor({2, 3}, 0.0), proj);
  const Tensor down = resample_fused(Tensor({2, 5}, 0.0), proj);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(up.at(r, j), static_cast<double>(j + 1));
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(down.at(r, j), -static_cast<double>(j + 1));
  }
}

TEST(Resample, PseudoInversePairRecoversInput) {
  // up embeds R^2 into R^3 via an orthonormal frame U; down applies U^T.
  const double s = 1.0 / std::sqrt(2.0);
  FusionProjection proj(2, 3, 3);
  proj.params().at(proj.up_weight()) = Tensor::matrix({{s, s, 0}, {0, 0, 1}});
  proj.params().at(proj.up_bias()) = Tensor({3}, 0.0);
  proj.params().at(proj.down_weight()) = Tensor::matrix({{s, 0}, {s, 0}, {0, 1}});
  proj.params().at(proj.down_bias()) = Tensor({2}, 0.0);
  std::mt19937_64 rng(4);
  const Tensor x = random_tensor({6, 2}, rng, -5, 5);
  const Tensor back = resample_fused(resample_global(x, proj), proj);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(back[i], x[i], 1e-10);
}

TEST(Resample, DimensionMismatch) {
  FusionProjection proj(3, 4, 1);
  EXPECT_THROW(resample_global(Tensor({2, 4}), proj), StructuralError);
  EXPECT_THROW(resample_fused(Tensor({2, 3}), proj), StructuralError);
}

TEST(Resample, InitIsIdentityPaddedWithSmallUniform) {
  FusionProjection proj(3, 5, 11);
  const Tensor& up = proj.params().at(proj.up_weight());
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 5; ++c) {
      if (c < 3) {
        EXPECT_EQ(up.at(r, c), r == c ? 1.0 : 0.0);
      } else {
        EXPECT_LE(std::abs(up.at(r, c)), FusionProjection::kPadInit);
      }
    }
  }
}

TEST(FusionWeights, ClosedForms) {
  const auto sym = fusion_weights(Tensor::matrix({{-3, 0.2, 7}}), Tensor::matrix({{-3, 0.2, 7}}));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(sym.a[i], 0.5);
    EXPECT_EQ(sym.b[i], 0.5);
  }
  const auto w = fusion_weights(Tensor::matrix({{std::log(2.0)}}), Tensor::matrix({{0.0}}));
  EXPECT_NEAR(w.a.item(), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(w.b.item(), 1.0 / 3.0, 1e-15);
  const auto big = fusion_weights(Tensor::matrix({{500.0}}), Tensor::matrix({{-500.0}}));
  EXPECT_TRUE(big.a.all_finite());
  EXPECT_NEAR(big.a.item(), 1.0, 1e-15);
}

TEST(FusionWeights, ShapeMismatch) {
  EXPECT_THROW(fusion_weights(Tensor({2, 3}), Tensor({2, 4})), StructuralError);
}

TEST(FusionWeights, SumToOneInOpenUnitInterval) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 1000; ++t) {
    const double range = t % 2 == 0 ? 10.0 : 1e3;
    const Tensor g = random_tensor({2, 5}, rng, -range, range);
    const Tensor l = random_tensor({2, 5}, rng, -range, range);
    const auto w = fusion_weights(g, l);
    for (std::size_t i = 0; i < g.size(); ++i) {
      EXPECT_NEAR(w.a[i] + w.b[i], 1.0, 1e-12);
      EXPECT_GE(w.a[i], 0.0);
      EXPECT_LE(w.a[i], 1.0);
      if (std::abs(g[i] - l[i]) < 30.0) {
        EXPECT_GT(w.a[i], 0.0);
        EXPECT_LT(w.a[i], 1.0);
      }
    }
  }
}

TEST(FusionWeights, ShiftCovariance) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> shift(-100, 100);
  for (int t = 0; t < 1000; ++t) {
    const Tensor g = random_tensor({1, 6}, rng, -5, 5);
    const Tensor l = random_tensor({1, 6}, rng, -5, 5);
    const double c = shift(rng);
    Tensor gs = g;
    Tensor ls = l;
    for (auto& v : gs.data()) v += c;
    for (auto& v : ls.data()) v += c;
    const auto w = fusion_weights(g, l);
    const auto ws = fusion_weights(gs, ls);
    for (std::size_t i = 0; i < 6; ++i) {
      EXPECT_NEAR(w.a[i], ws.a[i], 1e-12);
      EXPECT_NEAR(w.b[i], ws.b[i], 1e-12);
    }
  }
}

TEST(FuseLocal, IdempotentOnAgreementAndHalfWeights) {
  std::mt19937_64 rng(14);
  const Tensor x = random_tensor({3, 4}, rng);
  EXPECT_TRUE(bit_equal(fuse_local(x, x, fusion_weights(x, x)), x));

  const Tensor g = random_tensor({3, 4}, rng);
  const FusionWeights half{Tensor({3, 4}, 0.5), Tensor({3, 4}, 0.5)};
  const Tensor out = fuse_local(g, x, half);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(out[i], (g[i] + x[i]) / 2.0, 1e-15);
}

TEST(FuseLocal, MatchesScalarLoopAndIsConvex) {
  std::mt19937_64 rng(15);
  for (int t = 0; t < 1000; ++t) {
    const Tensor g = random_tensor({2, 5}, rng, -20, 20);
    const Tensor l = random_tensor({2, 5}, rng, -20, 20);
    const auto w = fusion_weights(g, l);
    const Tensor out = fuse_local(g, l, w);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double a = std::exp(g[i]) / (std::exp(g[i]) + std::exp(l[i]));
      EXPECT_NEAR(out[i], a * g[i] + (1.0 - a) * l[i], 1e-9);
      EXPECT_GE(out[i], std::min(g[i], l[i]));
      EXPECT_LE(out[i], std::max(g[i], l[i]));
    }
  }
}

TEST(FusionGradients, FullPathTwentySeeds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto report = run_grad_check_case("fusion", seed);
    EXPECT_TRUE(report.passed) << "seed " << seed << "\n" << report.summary();
  }
}

}  // namespace
}  // namespace bpfl
