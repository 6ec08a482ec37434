// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bpfl/autograd.hpp"
#include "bpfl/param_set.hpp"

namespace bpfl {

enum class LayerKind { dense, relu, softmax_output };

std::string to_string(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Trainable scalars of one layer: in*out + out for dense, zero otherwise.
std::size_t parameter_count(const LayerSpec& spec);

/// Throws StructuralError unless every layer is well formed and dims chain.
void validate_chain(const std::vector<LayerSpec>& layers);

/// dense(in -> w1), relu, dense(w1 -> w2), relu, ... one relu per width.
std::vector<LayerSpec> body_layers(std::size_t in_dim, const std::vector<std::size_t>& widths);

/// dense(features -> classes) followed by a softmax output.
std::vector<LayerSpec> head_layers(std::size_t features, std::size_t classes);

/// Feed-forward chain of LayerSpecs with its own parameters.
///
/// Parameter names are `<prefix>.fc<k>.weight` / `.bias`, where k is the index
/// of the dense layer in the chain. Weights are drawn from
/// U(-sqrt(1/in), +sqrt(1/in)); biases start at zero.
class Network {
 public:
  Network() = default;
  Network(std::string prefix, std::vector<LayerSpec> layers, std::uint64_t seed);

  /// Runs the chain. A trailing softmax_output layer is skipped unless
  /// `apply_softmax` is set, so the default result is logits.
  Var forward(Tape& tape, const Var& x, bool apply_softmax = false) const;

  const std::vector<LayerSpec>& layers() const { return layers_; }
  const std::string& prefix() const { return prefix_; }
  std::size_t in_dim() const { return layers_.front().in_dim; }
  std::size_t out_dim() const { return layers_.back().out_dim; }
  std::size_t parameter_count() const;

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  friend bool operator==(const Network&, const Network&) = default;

 private:
  std::string prefix_;
  std::vector<LayerSpec> layers_;
  ParamSet params_;
  std::vector<std::pair<std::string, std::string>> dense_names_;
};

}  // namespace bpfl
