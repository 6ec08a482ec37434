// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

#include "bpfl/tensor.hpp"

// Value-level kernels. The differentiable versions in autograd.hpp call these
// for their forward pass.
namespace bpfl {

/// out[r, j] = sum_k x[r, k] * W[k, j] + b[j].
Tensor dense_forward(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor relu(const Tensor& x);

/// Max-shifted softmax over the last axis.
Tensor softmax(const Tensor& z);

/// Mean over the batch of -log softmax(logits)[label].
double cross_entropy_loss(const Tensor& logits, std::span<const int> labels);

/// Smoothing used by dice_loss unless overridden.
inline constexpr double kDiceSmoothing = 1.0;

/// 1 - (2 sum(p t) + eps) / (sum(p) + sum(t) + eps), averaged over rows.
/// `pred` must lie in [0, 1] and `target` in {0, 1}.
double dice_loss(const Tensor& pred, const Tensor& target, double eps = kDiceSmoothing);

/// Index of the largest element of each row; ties go to the lowest index.
std::vector<int> argmax_rows(const Tensor& x);

}  // namespace bpfl
