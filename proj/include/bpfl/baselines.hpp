// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "bpfl/protocol.hpp"

namespace bpfl {

/// Plain supervised training of the bare local model (local body + local
/// head, no bypass, no fusion) with unit-weight cross-entropy.
double train_local_model(ClientState& client, const ProtocolConfig& cfg, std::size_t round, std::size_t epochs);

/// Bare local-model evaluation on the client's test split.
ConfusionMatrix evaluate_local_model(const ClientState& client);

/// One round of isolated training: every client runs
/// epochs_local + epochs_global epochs on its own shard. No communication.
RoundReport local_only_round(std::vector<ClientState>& clients, const ProtocolConfig& cfg, std::size_t round);

std::vector<RoundReport> baseline_local_only(std::vector<ClientState>& clients, const ProtocolConfig& cfg,
                                             std::size_t rounds);

/// Full-model server state for FedAvg.
struct FedAvgModel {
  Network body;
  Network head;
};

/// Throws ConfigError unless every client has the same local architecture.
void require_homogeneous(const std::vector<ClientState>& clients);

/// Server model initialized from client 0 and broadcast to every client.
FedAvgModel fedavg_init(std::vector<ClientState>& clients);

/// Local training of the full model, sample-weighted averaging, broadcast.
RoundReport fedavg_round(FedAvgModel& server, std::vector<ClientState>& clients, const ProtocolConfig& cfg,
                         std::size_t round);

/// Extra local epochs after the final round; replaces the per-client
/// metrics of `report` with post-finetune evaluation.
void fedavg_finetune(std::vector<ClientState>& clients, const ProtocolConfig& cfg, std::size_t round,
                     RoundReport& report);

std::vector<RoundReport> baseline_fedavg(std::vector<ClientState>& clients, const ProtocolConfig& cfg,
                                         std::size_t rounds, bool finetune);

struct ParamCountRow {
  std::string model;
  std::size_t params = 0;
};

struct ParamCountReport {
  std::vector<ParamCountRow> rows;
  std::size_t bypass_body = 0;
  std::size_t bypass_head = 0;
  std::size_t bypass_total = 0;
  std::size_t min_local = 0;
  double ratio = 0.0;  // bypass_total / min_local
  bool bypass_lighter = false;

  std::string to_text() const;
};

/// Trainable-parameter counts of every local model (body + head) and of the
/// bypass. Ablated bypass parts count as zero.
ParamCountReport param_count_report(const std::vector<ClientState>& clients, const AblationFlags& flags);

}  // namespace bpfl
