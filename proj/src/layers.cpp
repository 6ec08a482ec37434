// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#include "bpfl/layers.hpp"

#include <cmath>

#include <fmt/format.h>

#include "bpfl/errors.hpp"
#include "bpfl/random.hpp"

namespace bpfl {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense:
      return "dense";
    case LayerKind::relu:
      return "relu";
    case LayerKind::softmax_output:
      return "softmax-output";
  }
  return "unknown";
}

std::size_t parameter_count(const LayerSpec& spec) {
  return spec.kind == LayerKind::dense ? spec.in_dim * spec.out_dim + spec.out_dim : 0;
}

void validate_chain(const std::vector<LayerSpec>& layers) {
  if (layers.empty()) throw StructuralError("network needs at least one layer");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.in_dim == 0 || l.out_dim == 0) {
      throw StructuralError(fmt::format("layer {} ({}) has a zero dimension", i, to_string(l.kind)));
    }
    if (l.kind != LayerKind::dense && l.in_dim != l.out_dim) {
      throw StructuralError(fmt::format("layer {} ({}) must preserve its dimension, got {} -> {}", i,
                                        to_string(l.kind), l.in_dim, l.out_dim));
    }
    if (l.kind == LayerKind::softmax_output && i + 1 != layers.size()) {
      throw StructuralError(fmt::format("softmax-output layer {} must be last", i));
    }
    if (i > 0 && layers[i - 1].out_dim != l.in_dim) {
      throw StructuralError(fmt::format("layer {} expects {} inputs but layer {} produces {}", i, l.in_dim, i - 1,
                                        layers[i - 1].out_dim));
    }
  }
}

std::vector<LayerSpec> body_layers(std::size_t in_dim, const std::vector<std::size_t>& widths) {
  if (widths.empty()) throw StructuralError("body needs at least one width");
  std::vector<LayerSpec> layers;
  std::size_t prev = in_dim;
  for (auto w : widths) {
    layers.push_back({LayerKind::dense, prev, w});
    layers.push_back({LayerKind::relu, w, w});
    prev = w;
  }
  return layers;
}

std::vector<LayerSpec> head_layers(std::size_t features, std::size_t classes) {
  return {{LayerKind::dense, features, classes}, {LayerKind::softmax_output, classes, classes}};
}

Network::Network(std::string prefix, std::vector<LayerSpec> layers, std::uint64_t seed)
    : prefix_(std::move(prefix)), layers_(std::move(layers)) {
  validate_chain(layers_);
  Rng rng(seed);
  std::size_t k = 0;
  for (const auto& l : layers_) {
    if (l.kind != LayerKind::dense) continue;
    const double bound = std::sqrt(1.0 / static_cast<double>(l.in_dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor w({l.in_dim, l.out_dim});
    for (double& v : w.data()) v = dist(rng);
    auto& names = dense_names_.emplace_back(fmt::format("{}.fc{}.weight", prefix_, k),
                                            fmt::format("{}.fc{}.bias", prefix_, k));
    params_.add(names.first, std::move(w));
    params_.add(names.second, Tensor({l.out_dim}, 0.0));
    ++k;
  }
}

Var Network::forward(Tape& tape, const Var& x, bool apply_softmax) const {
  if (x.value().rank() != 2 || x.value().cols() != in_dim()) {
    throw StructuralError(fmt::format("{}: expected input [batch, {}], got {}", prefix_, in_dim(),
                                      to_string(x.value().shape())));
  }
  Var h = x;
  std::size_t k = 0;
  for (const auto& l : layers_) {
    switch (l.kind) {
      case LayerKind::dense: {
        Var w = tape.param(params_, dense_names_[k].first);
        Var b = tape.param(params_, dense_names_[k].second);
        h = dense(h, w, b);
        ++k;
        break;
      }
      case LayerKind::relu:
        h = relu(h);
        break;
      case LayerKind::softmax_output:
        if (apply_softmax) h = softmax(h);
        break;
    }
  }
  return h;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += bpfl::parameter_count(l);
  return n;
}

}  // namespace bpfl
