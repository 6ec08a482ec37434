// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#include "bpfl/fusion.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "bpfl/errors.hpp"
#include "bpfl/random.hpp"

namespace bpfl {

namespace {

Tensor padded_identity(std::size_t rows, std::size_t cols, Rng& rng) {
  std::uniform_real_distribution<double> dist(-FusionProjection::kPadInit, FusionProjection::kPadInit);
  Tensor w({rows, cols});
  const std::size_t square = std::min(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (r < square && c < square) {
        w.at(r, c) = r == c ? 1.0 : 0.0;
      } else {
        w.at(r, c) = dist(rng);
      }
    }
  }
  return w;
}

void require_cols(const Tensor& x, std::size_t expected, const char* what) {
  if (x.rank() != 2 || x.cols() != expected) {
    throw StructuralError(
        fmt::format("{}: expected [batch, {}] input, got {}", what, expected, to_string(x.shape())));
  }
}

}  // namespace

FusionProjection::FusionProjection(std::size_t global_dim, std::size_t local_dim, std::uint64_t seed,
                                   std::string prefix)
    : global_dim_(global_dim),
      local_dim_(local_dim),
      up_w_(prefix + ".up.weight"),
      up_b_(prefix + ".up.bias"),
      down_w_(prefix + ".down.weight"),
      down_b_(prefix + ".down.bias") {
  if (global_dim == 0 || local_dim == 0) throw StructuralError("fusion projection dims must be positive");
  Rng rng(seed);
  params_.add(up_w_, padded_identity(global_dim, local_dim, rng));
  params_.add(up_b_, Tensor({local_dim}, 0.0));
  params_.add(down_w_, padded_identity(local_dim, global_dim, rng));
  params_.add(down_b_, Tensor({global_dim}, 0.0));
}

Var resample_global(Tape& tape, const Var& x_g, const FusionProjection& proj) {
  require_cols(x_g.value(), proj.global_dim(), "resample_global");
  return dense(x_g, tape.param(proj.params(), proj.up_weight()), tape.param(proj.params(), proj.up_bias()));
}

FusionWeightVars fusion_weights(const Var& x_hat_g, const Var& x_l) {
  require_same_shape(x_hat_g.value(), x_l.value(), "fusion_weights");
  // b is the same pairwise softmax with the arguments swapped.
  return {pairwise_softmax(x_hat_g, x_l), pairwise_softmax(x_l, x_hat_g)};
}

Var fuse_local(const Var& x_hat_g, const Var& x_l, const FusionWeightVars& w) {
  require_same_shape(x_hat_g.value(), x_l.value(), "fuse_local");
  require_same_shape(w.a.value(), x_l.value(), "fuse_local weights");
  return add(mul(w.a, x_hat_g), mul(w.b, x_l));
}

Var resample_fused(Tape& tape, const Var& x_lf, const FusionProjection& proj) {
  require_cols(x_lf.value(), proj.local_dim(), "resample_fused");
  return dense(x_lf, tape.param(proj.params(), proj.down_weight()),
               tape.param(proj.params(), proj.down_bias()));
}

Tensor resample_global(const Tensor& x_g, const FusionProjection& proj) {
  Tape tape(false);
  return resample_global(tape, tape.constant(x_g), proj).value();
}

FusionWeights fusion_weights(const Tensor& x_hat_g, const Tensor& x_l) {
  Tape tape(false);
  auto w = fusion_weights(tape.constant(x_hat_g), tape.constant(x_l));
  return {w.a.value(), w.b.value()};
}

Tensor fuse_local(const Tensor& x_hat_g, const Tensor& x_l, const FusionWeights& w) {
  Tape tape(false);
  FusionWeightVars vars{tape.constant(w.a), tape.constant(w.b)};
  return fuse_local(tape.constant(x_hat_g), tape.constant(x_l), vars).value();
}

Tensor resample_fused(const Tensor& x_lf, const FusionProjection& proj) {
  Tape tape(false);
  return resample_fused(tape, tape.constant(x_lf), proj).value();
}

}  // namespace bpfl
