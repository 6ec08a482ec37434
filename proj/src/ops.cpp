// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#include "bpfl/ops.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "bpfl/errors.hpp"

namespace bpfl {

Tensor dense_forward(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || bias.rank() != 1 || x.cols() != weight.rows() ||
      bias.size() != weight.cols()) {
    throw StructuralError(fmt::format("dense: cannot apply W{} b{} to x{}", to_string(weight.shape()),
                                      to_string(bias.shape()), to_string(x.shape())));
  }
  const std::size_t batch = x.rows();
  const std::size_t in = weight.rows();
  const std::size_t out = weight.cols();
  Tensor y({batch, out});
  for (std::size_t r = 0; r < batch; ++r) {
    double* yr = y.raw() + r * out;
    std::copy(bias.raw(), bias.raw() + out, yr);
    const double* xr = x.raw() + r * in;
    for (std::size_t k = 0; k < in; ++k) {
      const double xv = xr[k];
      const double* wk = weight.raw() + k * out;
      for (std::size_t j = 0; j < out; ++j) yr[j] += xv * wk[j];
    }
  }
  y.require_finite("dense");
  return y;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor softmax(const Tensor& z) {
  z.require_finite("softmax input");
  Tensor out = z;
  const std::size_t c = z.cols();
  const std::size_t slices = z.size() / c;
  for (std::size_t s = 0; s < slices; ++s) {
    double* row = out.raw() + s * c;
    const double m = *std::max_element(row, row + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      row[j] = std::exp(row[j] - m);
      total += row[j];
    }
    for (std::size_t j = 0; j < c; ++j) row[j] /= total;
  }
  return out;
}

double cross_entropy_loss(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || labels.size() != logits.rows()) {
    throw StructuralError(fmt::format("cross_entropy: logits {} vs {} labels", to_string(logits.shape()),
                                      labels.size()));
  }
  logits.require_finite("cross_entropy logits");
  const std::size_t c = logits.cols();
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const int label = labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= c) {
      throw StructuralError(fmt::format("cross_entropy: label {} out of range [0, {})", label, c));
    }
    const double* row = logits.raw() + r * c;
    const double m = *std::max_element(row, row + c);
    double sum_exp = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum_exp += std::exp(row[j] - m);
    total += (m + std::log(sum_exp)) - row[label];
  }
  return total / static_cast<double>(logits.rows());
}

double dice_loss(const Tensor& pred, const Tensor& target, double eps) {
  require_same_shape(pred, target, "dice_loss");
  for (double p : pred.data()) {
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError(fmt::format("dice_loss: prediction {} outside [0, 1]", p));
  }
  for (double t : target.data()) {
    if (t != 0.0 && t != 1.0) throw DomainError(fmt::format("dice_loss: target {} is not binary", t));
  }
  const std::size_t batch = pred.rank() >= 2 ? pred.rows() : 1;
  const std::size_t n = pred.size() / batch;
  double total = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    double inter = 0.0;
    double sum_p = 0.0;
    double sum_t = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double p = pred[r * n + j];
      const double t = target[r * n + j];
      inter += p * t;
      sum_p += p;
      sum_t += t;
    }
    total += 1.0 - (2.0 * inter + eps) / (sum_p + sum_t + eps);
  }
  return total / static_cast<double>(batch);
}

std::vector<int> argmax_rows(const Tensor& x) {
  const std::size_t c = x.cols();
  std::vector<int> out(x.size() / c);
  for (std::size_t r = 0; r < out.size(); ++r) {
    const double* row = x.raw() + r * c;
    // max_element returns the first maximum, so ties resolve to the lowest index.
    out[r] = static_cast<int>(std::max_element(row, row + c) - row);
  }
  return out;
}

}  // namespace bpfl
