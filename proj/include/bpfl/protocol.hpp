// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bpfl/autograd.hpp"
#include "bpfl/data.hpp"
#include "bpfl/fusion.hpp"
#include "bpfl/layers.hpp"
#include "bpfl/metrics.hpp"
#include "bpfl/optimizer.hpp"

namespace bpfl {

/// Weights of the two-term losses. Stage a (local training) minimizes
///   lambda_l_loc * CE(ŷ_l) + lambda_g_loc * CE(ŷ_g)
/// and stage b (bypass training) minimizes
///   lambda_g_glob * CE(ŷ_g) + lambda_l_glob * CE(ŷ_l).
struct LossWeights {
  double lambda_l_loc = 0.9;
  double lambda_g_loc = 0.1;
  double lambda_g_glob = 0.9;
  double lambda_l_glob = 0.1;

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct AblationFlags {
  bool no_global_head = false;  // ŷ_g is never produced; its loss terms drop out
  bool no_global_body = false;  // x̂_g is replaced by zeros
  bool no_fusion = false;       // x_lf = x_l

  bool all() const { return no_global_head && no_global_body && no_fusion; }

  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

enum class AggregationWeighting { samples, uniform };

struct ProtocolConfig {
  std::size_t epochs_local = 4;
  std::size_t epochs_global = 1;
  std::size_t batch_size = 8;
  double lr_local = 1e-4;
  double lr_global = 1e-5;
  OptimizerKind optimizer = OptimizerKind::adam;
  LossWeights loss_weights;
  AblationFlags ablation;
  AggregationWeighting aggregation = AggregationWeighting::samples;
  bool reset_optimizer = false;
  std::size_t finetune_epochs = 5;
  std::uint64_t seed = 0;
  /// Upper bound on clients trained concurrently. Results do not depend on it.
  std::size_t threads = 1;
};

/// The shared lightweight model. Architecture is identical on every client.
struct GlobalBypass {
  Network body;  // input -> G features
  Network head;  // G features -> class logits

  std::size_t feature_dim() const { return body.out_dim(); }
  std::size_t parameter_count() const { return body.parameter_count() + head.parameter_count(); }

  friend bool operator==(const GlobalBypass&, const GlobalBypass&) = default;
};

bool bit_equal(const GlobalBypass& a, const GlobalBypass& b);

GlobalBypass make_bypass(std::size_t in_dim, const std::vector<std::size_t>& body_widths, std::size_t classes,
                         std::uint64_t seed);

/// Hidden widths of a client's local body; the last width is its feature
/// dimension C.
struct ClientArchitecture {
  std::vector<std::size_t> body_widths;

  friend bool operator==(const ClientArchitecture&, const ClientArchitecture&) = default;
};

struct ClientState {
  int id = 0;
  Network local_body;
  Network local_head;
  FusionProjection fusion;
  GlobalBypass bypass;  // working copy
  OptimizerState opt_local;
  OptimizerState opt_global;
  Dataset train;
  Dataset test;

  std::size_t sample_count() const { return train.size(); }
};

/// Builds a client with seeded local and fusion parameters and a copy of
/// `bypass`. Initialization depends only on (cfg.seed, id, arch), so the same
/// client is reproduced across methods.
ClientState make_client(int id, const ClientArchitecture& arch, const GlobalBypass& bypass, Dataset train,
                        Dataset test, const ProtocolConfig& cfg);

/// Intermediate values of one forward pass. Vars for skipped branches are
/// left unbound.
struct ForwardResult {
  Var x_l;
  Var x_g;
  Var x_hat_g;
  Var x_lf;
  Var x_gf;
  Var y_local;   // logits of the local head
  Var y_global;  // logits of the bypass head
};

ForwardResult forward_pass(Tape& tape, const ClientState& client, const Var& x, const AblationFlags& flags,
                           bool with_global_head = true);

enum class Stage {
  local,   // bypass frozen
  global,  // local model frozen
};

/// Sets trainable flags for a stage. The fusion projections stay trainable
/// in both stages.
void set_stage(ClientState& client, Stage stage);

/// Weighted two-term loss of a stage on one batch. Terms whose head is
/// ablated drop out.
Var stage_loss(Tape& tape, const ClientState& client, const Var& x, std::span<const int> labels,
               const ProtocolConfig& cfg, Stage stage);

/// Stage a: local model and fusion trained on the fused path, bypass frozen,
/// opt_local.
/// Returns the sample-weighted mean loss over all epochs.
double local_stage_train(ClientState& client, const ProtocolConfig& cfg, std::size_t round,
                         std::size_t epochs);

/// Stage b: bypass and fusion trained, local model frozen, opt_global.
double global_stage_train(ClientState& client, const ProtocolConfig& cfg, std::size_t round,
                          std::size_t epochs);

/// Weighted mean per parameter name, sum_k (w_k / sum w) p_k, accumulated in
/// input order and clamped to the per-element input envelope. `ids` label
/// inputs in error messages.
ParamSet weighted_average(std::span<const ParamSet* const> sets, std::span<const double> weights,
                          std::span<const int> ids);

/// Averages body and head as separate groups with the same formula.
GlobalBypass aggregate_bypass(std::span<const GlobalBypass> bypasses, std::span<const double> sample_counts,
                              std::span<const int> ids = {});

struct ClientRoundMetrics {
  int client_id = 0;
  double stage_a_loss = 0.0;
  double stage_b_loss = 0.0;
  double acc = 0.0;
  double mf1 = 0.0;

  friend bool operator==(const ClientRoundMetrics&, const ClientRoundMetrics&) = default;
};

struct RoundReport {
  std::size_t round = 0;
  std::vector<ClientRoundMetrics> clients;
  double mean_stage_a_loss = 0.0;
  double mean_stage_b_loss = 0.0;
  double mean_acc = 0.0;
  double mean_mf1 = 0.0;
  bool aggregated = false;

  /// Recomputes the unweighted means from the per-client rows.
  void finalize();

  friend bool operator==(const RoundReport&, const RoundReport&) = default;
};

/// Logits of the local head on the inference path (bypass head never runs).
Tensor inference_logits(const ClientState& client, const Tensor& x, const AblationFlags& flags);

/// argmax of the local-head logits; ties resolve to the lowest class.
std::vector<int> inference_forward(const ClientState& client, const Tensor& x, const AblationFlags& flags);

ConfusionMatrix evaluate(const ClientState& client, const AblationFlags& flags);

/// Download, stage a then stage b on every client, aggregate, broadcast,
/// evaluate. `round` is 1-based and keys the shuffling streams.
RoundReport run_round(GlobalBypass& server, std::vector<ClientState>& clients, const ProtocolConfig& cfg,
                      std::size_t round);

/// Per-client sample counts under the configured weighting.
std::vector<double> aggregation_weights(const std::vector<ClientState>& clients, AggregationWeighting weighting);

/// Runs fn(i) for i in [0, n) on up to `threads` threads. The first failure
/// (lowest index) is rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace bpfl
