// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bpfl/baselines.hpp"
#include "bpfl/checkpoint.hpp"
#include "bpfl/config.hpp"
#include "bpfl/protocol.hpp"

namespace bpfl {

struct ClientData {
  Dataset train;
  Dataset test;
};

/// Seeded synthetic shards for every client. Label-skew: one blob dataset
/// dealt by Dirichlet(alpha). Resolution: an IID split, client k degraded by
/// resolution_factors[k].
std::vector<ClientData> build_client_data(const ExperimentConfig& cfg);

/// Local architectures actually instantiated. FedAvg needs one shared model,
/// so every client gets client 0's architecture.
std::vector<ClientArchitecture> effective_architectures(const ExperimentConfig& cfg);

/// Optimizer moments as a ParamSet: `<param>#m`, `<param>#v`, `<param>#step`
/// and a scalar `#step`.
ParamSet encode_optimizer(const OptimizerState& state);
OptimizerState decode_optimizer(const ParamSet& set, OptimizerKind kind, double learning_rate);

/// One experiment advanced a round at a time.
class Simulation {
 public:
  explicit Simulation(ExperimentConfig cfg);

  const ExperimentConfig& config() const { return cfg_; }
  std::size_t round() const { return round_; }
  bool done() const { return round_ >= cfg_.rounds; }

  /// Runs round `round() + 1`. For fedavg-ft the last round includes the
  /// finetuning epochs.
  const RoundReport& step();
  void run_to_end();

  const std::vector<RoundReport>& history() const { return history_; }
  std::vector<ClientState>& clients() { return clients_; }
  const std::vector<ClientState>& clients() const { return clients_; }
  const GlobalBypass& server() const { return server_; }
  /// Notes about adjustments made to the config (e.g. FedAvg homogenization).
  const std::vector<std::string>& notes() const { return notes_; }

  Checkpoint to_checkpoint() const;
  /// Replaces all model, optimizer and history state. Returns a warning when
  /// the checkpoint came from a different config; throws IntegrityError when
  /// its sets do not fit this experiment.
  std::optional<std::string> restore(const Checkpoint& ckpt);

  ParamCountReport param_counts() const;

 private:
  ExperimentConfig cfg_;
  std::vector<ClientState> clients_;
  GlobalBypass server_;
  FedAvgModel fedavg_;
  std::size_t round_ = 0;
  std::vector<RoundReport> history_;
  std::vector<std::string> notes_;
};

/// Per-client final metrics and their average, in table layout.
struct Summary {
  std::vector<ClientRoundMetrics> clients;  // final round
  double average_acc = 0.0;
  double average_mf1 = 0.0;
  std::size_t rounds = 0;
  std::size_t aggregation_events = 0;
};

Summary summarize(const std::vector<RoundReport>& history);

/// Rows ACC and MF1, one column per client plus Average.
std::string format_table(const Summary& summary, const std::vector<std::string>& column_labels = {});

void write_metrics_csv(std::ostream& out, const std::vector<RoundReport>& history);
/// Parses the CSV written by write_metrics_csv; throws ConfigError with the
/// line number on malformed input.
std::vector<RoundReport> read_metrics_csv(std::istream& in);

std::string summary_json(const Summary& summary, const ExperimentConfig* cfg);

struct RunOptions {
  std::optional<std::filesystem::path> resume;
  std::ostream* log = nullptr;  // progress lines, may be null
};

/// Runs to cfg.rounds and writes metrics.csv, summary.json, param_count.txt,
/// run.log and checkpoint.bpfl into cfg.out (plus checkpoints/round_NNNN.bpfl
/// every cfg.checkpoint_every rounds).
Summary run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {});

}  // namespace bpfl
