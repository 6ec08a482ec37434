// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#include "bpfl/baselines.hpp"

#include <algorithm>
#include <limits>

#include <fmt/format.h>

#include "bpfl/errors.hpp"
#include "bpfl/ops.hpp"
#include "training.hpp"

namespace bpfl {

namespace {

void set_local_trainable(ClientState& c) {
  c.local_body.params().set_all_trainable(true);
  c.local_head.params().set_all_trainable(true);
}

Tensor local_model_logits(const ClientState& c, const Tensor& x) {
  Tape tape(false);
  Var h = c.local_body.forward(tape, tape.constant(x));
  return c.local_head.forward(tape, h).value();
}

void evaluate_into(std::vector<ClientState>& clients, const ProtocolConfig& cfg, RoundReport& report) {
  parallel_for(clients.size(), cfg.threads, [&](std::size_t i) {
    const auto cm = evaluate_local_model(clients[i]);
    report.clients[i].acc = accuracy(cm);
    report.clients[i].mf1 = macro_f1(cm);
  });
}

}  // namespace

double train_local_model(ClientState& client, const ProtocolConfig& cfg, std::size_t round, std::size_t epochs) {
  set_local_trainable(client);
  auto loss = [&](Tape& tape, const Var& x, std::span<const int> labels) {
    Var h = client.local_body.forward(tape, x);
    return cross_entropy(client.local_head.forward(tape, h), labels);
  };
  std::vector<ParamSet*> groups{&client.local_body.params(), &client.local_head.params()};
  return detail::run_epochs(client, cfg, round, detail::StageTag::local, epochs, loss, groups, client.opt_local);
}

ConfusionMatrix evaluate_local_model(const ClientState& client) {
  const auto predicted = argmax_rows(local_model_logits(client, client.test.features));
  return ConfusionMatrix::from_predictions(client.test.labels, predicted, client.test.classes);
}

RoundReport local_only_round(std::vector<ClientState>& clients, const ProtocolConfig& cfg, std::size_t round) {
  detail::require_sorted_ids(clients);
  RoundReport report;
  report.round = round;
  report.clients.resize(clients.size());
  parallel_for(clients.size(), cfg.threads, [&](std::size_t i) {
    ClientState& c = clients[i];
    try {
      if (cfg.reset_optimizer) c.opt_local.reset();
      report.clients[i].client_id = c.id;
      report.clients[i].stage_a_loss = train_local_model(c, cfg, round, cfg.epochs_local + cfg.epochs_global);
    } catch (...) {
      rethrow_with_context(fmt::format("round {} client {}", round, c.id));
    }
  });
  evaluate_into(clients, cfg, report);
  report.finalize();
  return report;
}

std::vector<RoundReport> baseline_local_only(std::vector<ClientState>& clients, const ProtocolConfig& cfg,
                                             std::size_t rounds) {
  std::vector<RoundReport> reports;
  for (std::size_t r = 1; r <= rounds; ++r) reports.push_back(local_only_round(clients, cfg, r));
  return reports;
}

void require_homogeneous(const std::vector<ClientState>& clients) {
  if (clients.empty()) throw ConfigError("FedAvg needs at least one client");
  const auto& ref = clients.front();
  for (const auto& c : clients) {
    if (c.local_body.layers() != ref.local_body.layers() || c.local_head.layers() != ref.local_head.layers()) {
      throw ConfigError(fmt::format("FedAvg requires one shared architecture; client {} differs from client {}",
                                    c.id, ref.id));
    }
  }
}

FedAvgModel fedavg_init(std::vector<ClientState>& clients) {
  require_homogeneous(clients);
  FedAvgModel server{clients.front().local_body, clients.front().local_head};
  for (auto& c : clients) {
    c.local_body = server.body;
    c.local_head = server.head;
  }
  return server;
}

RoundReport fedavg_round(FedAvgModel& server, std::vector<ClientState>& clients, const ProtocolConfig& cfg,
                         std::size_t round) {
  require_homogeneous(clients);
  detail::require_sorted_ids(clients);
  RoundReport report;
  report.round = round;
  report.clients.resize(clients.size());
  parallel_for(clients.size(), cfg.threads, [&](std::size_t i) {
    ClientState& c = clients[i];
    try {
      c.local_body.params() = server.body.params();
      c.local_head.params() = server.head.params();
      if (cfg.reset_optimizer) c.opt_local.reset();
      report.clients[i].client_id = c.id;
      report.clients[i].stage_a_loss = train_local_model(c, cfg, round, cfg.epochs_local + cfg.epochs_global);
    } catch (...) {
      rethrow_with_context(fmt::format("round {} client {}", round, c.id));
    }
  });

  std::vector<const ParamSet*> bodies;
  std::vector<const ParamSet*> heads;
  std::vector<int> ids;
  for (const auto& c : clients) {
    bodies.push_back(&c.local_body.params());
    heads.push_back(&c.local_head.params());
    ids.push_back(c.id);
  }
  const auto weights = aggregation_weights(clients, cfg.aggregation);
  server.body.params() = weighted_average(bodies, weights, ids);
  server.head.params() = weighted_average(heads, weights, ids);
  for (auto& c : clients) {
    c.local_body.params() = server.body.params();
    c.local_head.params() = server.head.params();
  }
  report.aggregated = true;
  evaluate_into(clients, cfg, report);
  report.finalize();
  return report;
}

void fedavg_finetune(std::vector<ClientState>& clients, const ProtocolConfig& cfg, std::size_t round,
                     RoundReport& report) {
  parallel_for(clients.size(), cfg.threads, [&](std::size_t i) {
    ClientState& c = clients[i];
    set_local_trainable(c);
    auto loss = [&](Tape& tape, const Var& x, std::span<const int> labels) {
      Var h = c.local_body.forward(tape, x);
      return cross_entropy(c.local_head.forward(tape, h), labels);
    };
    std::vector<ParamSet*> groups{&c.local_body.params(), &c.local_head.params()};
    detail::run_epochs(c, cfg, round, detail::StageTag::finetune, cfg.finetune_epochs, loss, groups, c.opt_local);
  });
  evaluate_into(clients, cfg, report);
  report.finalize();
}

std::vector<RoundReport> baseline_fedavg(std::vector<ClientState>& clients, const ProtocolConfig& cfg,
                                         std::size_t rounds, bool finetune) {
  FedAvgModel server = fedavg_init(clients);
  std::vector<RoundReport> reports;
  for (std::size_t r = 1; r <= rounds; ++r) {
    reports.push_back(fedavg_round(server, clients, cfg, r));
    if (finetune && r == rounds && cfg.finetune_epochs > 0) fedavg_finetune(clients, cfg, r, reports.back());
  }
  return reports;
}

std::string ParamCountReport::to_text() const {
  std::string out = fmt::format("{:<24} {:>10}\n", "model", "params");
  for (const auto& r : rows) out += fmt::format("{:<24} {:>10}\n", r.model, r.params);
  out += fmt::format("bypass/min-local ratio: {:.4f} ({})\n", ratio,
                     bypass_lighter ? "bypass lighter" : "bypass NOT lighter");
  return out;
}

ParamCountReport param_count_report(const std::vector<ClientState>& clients, const AblationFlags& flags) {
  ParamCountReport report;
  report.min_local = std::numeric_limits<std::size_t>::max();
  for (const auto& c : clients) {
    const std::size_t n = c.local_body.parameter_count() + c.local_head.parameter_count();
    report.rows.push_back({fmt::format("client{} local", c.id), n});
    report.min_local = std::min(report.min_local, n);
  }
  if (clients.empty()) report.min_local = 0;
  if (!clients.empty()) {
    const auto& b = clients.front().bypass;
    report.bypass_body = flags.no_global_body ? 0 : b.body.parameter_count();
    report.bypass_head = flags.no_global_head ? 0 : b.head.parameter_count();
  }
  report.bypass_total = report.bypass_body + report.bypass_head;
  report.rows.push_back({"bypass body", report.bypass_body});
  report.rows.push_back({"bypass head", report.bypass_head});
  report.rows.push_back({"bypass total", report.bypass_total});
  report.ratio = report.min_local > 0
                     ? static_cast<double>(report.bypass_total) / static_cast<double>(report.min_local)
                     : 0.0;
  report.bypass_lighter = report.min_local > 0 && report.bypass_total < report.min_local;
  return report;
}

}  // namespace bpfl
