// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

// Minibatch loop shared by the protocol stages and the baselines.

#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

#include <fmt/format.h>

#include "bpfl/errors.hpp"
#include "bpfl/protocol.hpp"
#include "bpfl/random.hpp"

namespace bpfl::detail {

// Shuffle stream per stage. Local-only and FedAvg training reuse `local`.
enum class StageTag : std::uint64_t { local = 1, global = 2, finetune = 3 };

inline void require_sorted_ids(const std::vector<ClientState>& clients) {
  for (std::size_t i = 1; i < clients.size(); ++i) {
    if (clients[i - 1].id >= clients[i].id) {
      throw ConfigError(fmt::format("clients must be ordered by ascending id (position {} has id {} after {})", i,
                                    clients[i].id, clients[i - 1].id));
    }
  }
}

inline Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  const std::size_t d = x.cols();
  std::vector<double> data;
  data.reserve(rows.size() * d);
  for (auto r : rows) data.insert(data.end(), x.raw() + r * d, x.raw() + (r + 1) * d);
  return Tensor({rows.size(), d}, std::move(data));
}

/// Runs `epochs` shuffled passes over the client's training split. For each
/// minibatch, builds the loss with `loss(tape, x, labels)`, back-propagates
/// and applies `opt` to every set in `groups`. Returns the sample-weighted
/// mean loss.
template <class LossFn>
double run_epochs(ClientState& client, const ProtocolConfig& cfg, std::size_t round, StageTag stage,
                  std::size_t epochs, LossFn&& loss, std::span<ParamSet* const> groups, OptimizerState& opt) {
  const std::size_t n = client.train.size();
  if (n == 0) throw ConfigError(fmt::format("client {}: empty training shard", client.id));
  if (epochs == 0) throw ConfigError("epochs must be at least 1");
  if (cfg.batch_size == 0) throw ConfigError("batch size must be at least 1");

  std::vector<std::size_t> order(n);
  std::vector<int> labels;
  double total = 0.0;
  std::size_t seen = 0;
  for (std::size_t e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(cfg.seed, {tag(Stream::shuffle), static_cast<std::uint64_t>(client.id), round,
                                   static_cast<std::uint64_t>(stage), e}));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      std::span<const std::size_t> batch(order.data() + start, stop - start);
      labels.clear();
      for (auto i : batch) labels.push_back(client.train.labels[i]);

      Tape tape;
      Var x = tape.constant(gather_rows(client.train.features, batch));
      Var l = loss(tape, x, std::span<const int>(labels));
      const double value = l.value().item();
      Gradients grads = tape.backward(l);
      for (ParamSet* g : groups) optimizer_step(*g, grads, opt);

      total += value * static_cast<double>(batch.size());
      seen += batch.size();
    }
  }
  return total / static_cast<double>(seen);
}

}  // namespace bpfl::detail
