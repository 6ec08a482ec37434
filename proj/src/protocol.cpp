// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#include "bpfl/protocol.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <numeric>
#include <thread>

#include <fmt/format.h>

#include "bpfl/errors.hpp"
#include "bpfl/ops.hpp"
#include "bpfl/random.hpp"
#include "training.hpp"

namespace bpfl {

bool bit_equal(const GlobalBypass& a, const GlobalBypass& b) {
  return bit_equal(a.body.params(), b.body.params()) && bit_equal(a.head.params(), b.head.params());
}

GlobalBypass make_bypass(std::size_t in_dim, const std::vector<std::size_t>& body_widths, std::size_t classes,
                         std::uint64_t seed) {
  const std::uint64_t s = derive_seed(seed, {tag(Stream::bypass_init)});
  GlobalBypass b;
  b.body = Network("bypass_body", body_layers(in_dim, body_widths), derive_seed(s, {0}));
  b.head = Network("bypass_head", head_layers(b.body.out_dim(), classes), derive_seed(s, {1}));
  return b;
}

ClientState make_client(int id, const ClientArchitecture& arch, const GlobalBypass& bypass, Dataset train,
                        Dataset test, const ProtocolConfig& cfg) {
  if (train.size() == 0) throw ConfigError(fmt::format("client {}: empty training shard", id));
  if (train.dim() != bypass.body.in_dim()) {
    throw StructuralError(fmt::format("client {}: data has {} features but the bypass expects {}", id, train.dim(),
                                      bypass.body.in_dim()));
  }
  const auto cid = static_cast<std::uint64_t>(id);
  const std::size_t classes = bypass.head.out_dim();
  ClientState c;
  c.id = id;
  c.local_body = Network("local_body", body_layers(train.dim(), arch.body_widths),
                         derive_seed(cfg.seed, {tag(Stream::local_init), cid, 0}));
  c.local_head = Network("local_head", head_layers(c.local_body.out_dim(), classes),
                         derive_seed(cfg.seed, {tag(Stream::local_init), cid, 1}));
  c.fusion = FusionProjection(bypass.feature_dim(), c.local_body.out_dim(),
                              derive_seed(cfg.seed, {tag(Stream::fusion_init), cid}));
  c.bypass = bypass;
  c.opt_local = OptimizerState(cfg.optimizer, cfg.lr_local);
  c.opt_global = OptimizerState(cfg.optimizer, cfg.lr_global);
  c.train = std::move(train);
  c.test = std::move(test);
  return c;
}

ForwardResult forward_pass(Tape& tape, const ClientState& client, const Var& x, const AblationFlags& flags,
                           bool with_global_head) {
  try {
    ForwardResult r;
    r.x_l = client.local_body.forward(tape, x);
    if (flags.no_fusion) {
      r.x_lf = r.x_l;
    } else {
      if (flags.no_global_body) {
        r.x_hat_g = tape.constant(Tensor(r.x_l.value().shape(), 0.0));
      } else {
        r.x_g = client.bypass.body.forward(tape, x);
        r.x_hat_g = resample_global(tape, r.x_g, client.fusion);
      }
      r.x_lf = fuse_local(r.x_hat_g, r.x_l, fusion_weights(r.x_hat_g, r.x_l));
    }
    r.y_local = client.local_head.forward(tape, r.x_lf);
    if (with_global_head && !flags.no_global_head) {
      r.x_gf = resample_fused(tape, r.x_lf, client.fusion);
      r.y_global = client.bypass.head.forward(tape, r.x_gf);
    }
    return r;
  } catch (const StructuralError&) {
    rethrow_with_context(fmt::format("client {}", client.id));
  }
}

void set_stage(ClientState& client, Stage stage) {
  const bool local = stage == Stage::local;
  client.local_body.params().set_all_trainable(local);
  client.local_head.params().set_all_trainable(local);
  client.bypass.body.params().set_all_trainable(!local);
  client.bypass.head.params().set_all_trainable(!local);
  client.fusion.params().set_all_trainable(true);
}

Var stage_loss(Tape& tape, const ClientState& client, const Var& x, std::span<const int> labels,
               const ProtocolConfig& cfg, Stage stage) {
  const auto& w = cfg.loss_weights;
  ForwardResult f = forward_pass(tape, client, x, cfg.ablation);
  std::vector<std::pair<double, Var>> terms;
  if (stage == Stage::local) {
    terms.emplace_back(w.lambda_l_loc, cross_entropy(f.y_local, labels));
    if (f.y_global.valid()) terms.emplace_back(w.lambda_g_loc, cross_entropy(f.y_global, labels));
  } else {
    if (f.y_global.valid()) terms.emplace_back(w.lambda_g_glob, cross_entropy(f.y_global, labels));
    terms.emplace_back(w.lambda_l_glob, cross_entropy(f.y_local, labels));
  }
  return weighted_sum(terms);
}

double local_stage_train(ClientState& client, const ProtocolConfig& cfg, std::size_t round, std::size_t epochs) {
  set_stage(client, Stage::local);
  auto loss = [&](Tape& tape, const Var& x, std::span<const int> labels) {
    return stage_loss(tape, client, x, labels, cfg, Stage::local);
  };
  std::vector<ParamSet*> groups{&client.local_body.params(), &client.local_head.params(), &client.fusion.params()};
  return detail::run_epochs(client, cfg, round, detail::StageTag::local, epochs, loss, groups, client.opt_local);
}

double global_stage_train(ClientState& client, const ProtocolConfig& cfg, std::size_t round, std::size_t epochs) {
  set_stage(client, Stage::global);
  auto loss = [&](Tape& tape, const Var& x, std::span<const int> labels) {
    return stage_loss(tape, client, x, labels, cfg, Stage::global);
  };
  std::vector<ParamSet*> groups{&client.bypass.body.params(), &client.bypass.head.params(),
                                &client.fusion.params()};
  return detail::run_epochs(client, cfg, round, detail::StageTag::global, epochs, loss, groups, client.opt_global);
}

ParamSet weighted_average(std::span<const ParamSet* const> sets, std::span<const double> weights,
                          std::span<const int> ids) {
  if (sets.empty()) throw StructuralError("weighted_average of no parameter sets");
  if (weights.size() != sets.size()) {
    throw StructuralError(fmt::format("{} parameter sets but {} weights", sets.size(), weights.size()));
  }
  auto label = [&](std::size_t k) { return k < ids.size() ? ids[k] : static_cast<int>(k); };
  double total = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (!(weights[k] > 0.0)) throw ConfigError(fmt::format("client {}: aggregation weight must be positive", label(k)));
    total += weights[k];
  }
  const ParamSet& ref = *sets.front();
  for (std::size_t k = 1; k < sets.size(); ++k) {
    const ParamSet& other = *sets[k];
    if (other.size() != ref.size()) {
      throw StructuralError(fmt::format("client {} has {} parameters, client {} has {}", label(k), other.size(),
                                        label(0), ref.size()));
    }
    auto it = other.begin();
    for (const auto& e : ref) {
      if (it->name != e.name || it->value.shape() != e.value.shape()) {
        throw StructuralError(fmt::format("parameter '{}' {} of client {} is incompatible with '{}' {} of client {}",
                                          it->name, to_string(it->value.shape()), label(k), e.name,
                                          to_string(e.value.shape()), label(0)));
      }
      ++it;
    }
  }

  ParamSet out;
  std::size_t idx = 0;
  for (const auto& e : ref) {
    Tensor acc(e.value.shape(), 0.0);
    Tensor lo = e.value;
    Tensor hi = e.value;
    for (std::size_t k = 0; k < sets.size(); ++k) {
      const Tensor& p = std::next(sets[k]->begin(), static_cast<std::ptrdiff_t>(idx))->value;
      const double wk = weights[k] / total;
      for (std::size_t i = 0; i < acc.size(); ++i) {
        acc[i] += wk * p[i];
        lo[i] = std::min(lo[i], p[i]);
        hi[i] = std::max(hi[i], p[i]);
      }
    }
    // The exact weighted mean lies in the envelope; rounding can step one ulp out.
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = std::clamp(acc[i], lo[i], hi[i]);
    out.add(e.name, std::move(acc), true);
    ++idx;
  }
  return out;
}

GlobalBypass aggregate_bypass(std::span<const GlobalBypass> bypasses, std::span<const double> sample_counts,
                              std::span<const int> ids) {
  if (bypasses.empty()) throw StructuralError("aggregate_bypass of no clients");
  std::vector<const ParamSet*> bodies;
  std::vector<const ParamSet*> heads;
  for (const auto& b : bypasses) {
    bodies.push_back(&b.body.params());
    heads.push_back(&b.head.params());
  }
  GlobalBypass out = bypasses.front();
  out.body.params() = weighted_average(bodies, sample_counts, ids);
  out.head.params() = weighted_average(heads, sample_counts, ids);
  return out;
}

void RoundReport::finalize() {
  mean_stage_a_loss = mean_stage_b_loss = mean_acc = mean_mf1 = 0.0;
  if (clients.empty()) return;
  for (const auto& c : clients) {
    mean_stage_a_loss += c.stage_a_loss;
    mean_stage_b_loss += c.stage_b_loss;
    mean_acc += c.acc;
    mean_mf1 += c.mf1;
  }
  const auto n = static_cast<double>(clients.size());
  mean_stage_a_loss /= n;
  mean_stage_b_loss /= n;
  mean_acc /= n;
  mean_mf1 /= n;
}

Tensor inference_logits(const ClientState& client, const Tensor& x, const AblationFlags& flags) {
  Tape tape(false);
  return forward_pass(tape, client, tape.constant(x), flags, /*with_global_head=*/false).y_local.value();
}

std::vector<int> inference_forward(const ClientState& client, const Tensor& x, const AblationFlags& flags) {
  return argmax_rows(inference_logits(client, x, flags));
}

ConfusionMatrix evaluate(const ClientState& client, const AblationFlags& flags) {
  const auto predicted = inference_forward(client, client.test.features, flags);
  return ConfusionMatrix::from_predictions(client.test.labels, predicted, client.test.classes);
}

std::vector<double> aggregation_weights(const std::vector<ClientState>& clients, AggregationWeighting weighting) {
  std::vector<double> w;
  for (const auto& c : clients) {
    w.push_back(weighting == AggregationWeighting::samples ? static_cast<double>(c.sample_count()) : 1.0);
  }
  return w;
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

RoundReport run_round(GlobalBypass& server, std::vector<ClientState>& clients, const ProtocolConfig& cfg,
                      std::size_t round) {
  detail::require_sorted_ids(clients);
  RoundReport report;
  report.round = round;
  report.clients.resize(clients.size());

  // a + b: each client touches only its own state.
  parallel_for(clients.size(), cfg.threads, [&](std::size_t i) {
    ClientState& c = clients[i];
    try {
      c.bypass = server;
      if (cfg.reset_optimizer) {
        c.opt_local.reset();
        c.opt_global.reset();
      }
      auto& m = report.clients[i];
      m.client_id = c.id;
      m.stage_a_loss = local_stage_train(c, cfg, round, cfg.epochs_local);
      m.stage_b_loss = global_stage_train(c, cfg, round, cfg.epochs_global);
    } catch (...) {
      rethrow_with_context(fmt::format("round {} client {}", round, c.id));
    }
  });

  // c: aggregate in id order, then broadcast.
  std::vector<GlobalBypass> uploads;
  std::vector<int> ids;
  for (const auto& c : clients) {
    uploads.push_back(c.bypass);
    ids.push_back(c.id);
  }
  server = aggregate_bypass(uploads, aggregation_weights(clients, cfg.aggregation), ids);
  for (auto& c : clients) c.bypass = server;
  report.aggregated = true;

  parallel_for(clients.size(), cfg.threads, [&](std::size_t i) {
    const auto cm = evaluate(clients[i], cfg.ablation);
    report.clients[i].acc = accuracy(cm);
    report.clients[i].mf1 = macro_f1(cm);
  });
  report.finalize();
  return report;
}

}  // namespace bpfl
