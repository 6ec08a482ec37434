// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "bpfl/autograd.hpp"
#include "bpfl/param_set.hpp"
#include "bpfl/tensor.hpp"

namespace bpfl {

/// Features weighted fusion between a G-dim global feature and a C-dim local
/// feature.
///
///   x̂_g  = up(x_g)                      (G -> C)
///   a_i  = exp(x̂_g,i) / (exp(x̂_g,i) + exp(x_l,i)),  b_i = 1 - a_i
///   x_lf = a ⊙ x̂_g + b ⊙ x_l
///   x_gf = down(x_lf)                   (C -> G)
///
/// The projections are learned affine maps (a 1x1 convolution over a vector
/// feature). They are personalized per client and never aggregated.
class FusionProjection {
 public:
  FusionProjection() = default;

  /// Leading min(G, C) square of each weight is the identity; remaining
  /// weights are drawn from U(-kPadInit, kPadInit); biases are zero.
  FusionProjection(std::size_t global_dim, std::size_t local_dim, std::uint64_t seed,
                   std::string prefix = "fusion");

  static constexpr double kPadInit = 1e-2;

  std::size_t global_dim() const { return global_dim_; }
  std::size_t local_dim() const { return local_dim_; }

  const std::string& up_weight() const { return up_w_; }
  const std::string& up_bias() const { return up_b_; }
  const std::string& down_weight() const { return down_w_; }
  const std::string& down_bias() const { return down_b_; }

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  std::size_t parameter_count() const { return params_.scalar_count(); }

  friend bool operator==(const FusionProjection&, const FusionProjection&) = default;

 private:
  std::size_t global_dim_ = 0;
  std::size_t local_dim_ = 0;
  std::string up_w_, up_b_, down_w_, down_b_;
  ParamSet params_;
};

struct FusionWeights {
  Tensor a;  // weight on the resampled global feature
  Tensor b;  // weight on the local feature
};

struct FusionWeightVars {
  Var a;
  Var b;
};

// Tape versions; these are what training runs through.
Var resample_global(Tape& tape, const Var& x_g, const FusionProjection& proj);
FusionWeightVars fusion_weights(const Var& x_hat_g, const Var& x_l);
Var fuse_local(const Var& x_hat_g, const Var& x_l, const FusionWeightVars& w);
Var resample_fused(Tape& tape, const Var& x_lf, const FusionProjection& proj);

// Value versions, evaluated on a gradient-free tape.
Tensor resample_global(const Tensor& x_g, const FusionProjection& proj);
FusionWeights fusion_weights(const Tensor& x_hat_g, const Tensor& x_l);
Tensor fuse_local(const Tensor& x_hat_g, const Tensor& x_l, const FusionWeights& w);
Tensor resample_fused(const Tensor& x_lf, const FusionProjection& proj);

}  // namespace bpfl
