// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bpfl/param_set.hpp"
#include "bpfl/tensor.hpp"

namespace bpfl {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  Tape& tape() const;
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradients keyed by parameter name; one entry per trainable parameter that
/// was read on the tape, in first-use order.
using Gradients = ParamSet;

/// Reverse-mode tape. Nodes are appended in evaluation order, so the node
/// list is already a topological order.
///
/// A tape is single-use: backward() may be called once.
class Tape {
 public:
  using BackwardFn = std::function<void(const Tensor& out, const Tensor& out_grad,
                                        std::span<const Tensor* const> inputs,
                                        std::span<Tensor* const> input_grads)>;

  /// With `grad_enabled` false every parameter is read as a constant and no
  /// backward closures are kept (inference).
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);

  /// Reads a parameter. Trainable entries receive gradients; frozen entries
  /// behave as constants and never appear in the gradient map.
  Var param(const ParamSet& params, std::string_view name);

  /// Records the output of a differentiable op.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward, std::string_view op);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(const Var& v) const { return nodes_[v.id()].requires_grad; }
  std::size_t node_count() const { return nodes_.size(); }

  /// Propagates d(loss)/d(node) back to every trainable parameter.
  /// Throws UsageError on an empty tape, an invalid handle, or a second call.
  Gradients backward(const Var& loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    std::string param_name;  // non-empty for trainable parameter leaves
  };

  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
  bool consumed_ = false;
};

// Differentiable ops. All inputs must live on the same tape.

Var dense(const Var& x, const Var& weight, const Var& bias);
Var relu(const Var& x);
Var softmax(const Var& z);
Var cross_entropy(const Var& logits, std::span<const int> labels);
Var dice_loss(const Var& pred, const Tensor& target, double eps = 1.0);

/// Elementwise exp(g) / (exp(g) + exp(l)), max-shifted.
Var pairwise_softmax(const Var& g, const Var& l);

Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var sum(const Var& a);

/// Sum of weight_i * term_i over scalar terms.
Var weighted_sum(std::span<const std::pair<double, Var>> terms);

}  // namespace bpfl
