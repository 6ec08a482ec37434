// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#include "bpfl/grad_suite.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include <fmt/format.h>

#include "bpfl/errors.hpp"
#include "bpfl/ops.hpp"
#include "bpfl/protocol.hpp"
#include "bpfl/random.hpp"

namespace bpfl {

namespace {

constexpr std::size_t kBatch = 5;
constexpr std::size_t kIn = 6;
constexpr std::size_t kClasses = 3;
// Inputs are redrawn until every ReLU pre-activation clears this margin.
constexpr double kKinkMargin = 1e-4;
constexpr int kMaxRedraws = 100;

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

std::vector<int> random_labels(std::size_t n, std::size_t classes, Rng& rng) {
  std::uniform_int_distribution<int> u(0, static_cast<int>(classes) - 1);
  std::vector<int> out(n);
  for (auto& l : out) l = u(rng);
  return out;
}

// Smallest |z| over the inputs of every relu layer.
double min_abs_preactivation(const Network& net, const Tensor& x) {
  double least = std::numeric_limits<double>::infinity();
  Tensor h = x;
  std::size_t dense_index = 0;
  for (const auto& layer : net.layers()) {
    if (layer.kind == LayerKind::dense) {
      const auto base = fmt::format("{}.fc{}", net.prefix(), dense_index++);
      h = dense_forward(h, net.params().at(base + ".weight"), net.params().at(base + ".bias"));
    } else if (layer.kind == LayerKind::relu) {
      for (double v : h.data()) least = std::min(least, std::abs(v));
      h = relu(h);
    }
  }
  return least;
}

// Projects a tensor-valued output to a scalar with fixed random weights.
Var project(const Var& v, const Tensor& r) {
  Tape& tape = v.tape();
  return sum(mul(v, tape.constant(r)));
}

GradCheckReport check_network(const std::vector<LayerSpec>& layers, bool apply_softmax, std::uint64_t seed,
                              double tol) {
  Rng rng(seed);
  Network net("net", layers, derive_seed(seed, {1}));
  Tensor x = random_tensor({kBatch, layers.front().in_dim}, rng, -2.0, 2.0);
  for (int k = 0; k < kMaxRedraws && min_abs_preactivation(net, x) < kKinkMargin; ++k) {
    x = random_tensor({kBatch, layers.front().in_dim}, rng, -2.0, 2.0);
  }
  const Tensor r = random_tensor({kBatch, layers.back().out_dim}, rng);
  std::vector<ParamSet*> sets{&net.params()};
  return finite_difference_check(
      sets, [&](Tape& t) { return project(net.forward(t, t.constant(x), apply_softmax), r); }, tol);
}

ProtocolConfig small_protocol() {
  ProtocolConfig cfg;
  cfg.loss_weights = {0.7, 0.3, 0.6, 0.4};
  return cfg;
}

ClientState small_client(std::uint64_t seed, Rng& rng) {
  ProtocolConfig cfg = small_protocol();
  cfg.seed = seed;
  Dataset train{random_tensor({kBatch, kIn}, rng, -2.0, 2.0), random_labels(kBatch, kClasses, rng), kClasses, {}};
  GlobalBypass bypass = make_bypass(kIn, {4}, kClasses, seed);
  ClientState c = make_client(0, {{7, 5}}, bypass, train, train, cfg);
  auto near_kink = [&] {
    return std::min(min_abs_preactivation(c.local_body, c.train.features),
                    min_abs_preactivation(c.bypass.body, c.train.features)) < kKinkMargin;
  };
  for (int k = 0; k < kMaxRedraws && near_kink(); ++k) {
    c.train.features = random_tensor({kBatch, kIn}, rng, -2.0, 2.0);
  }
  // Move the projections away from their identity start so every weight matters.
  for (auto& e : c.fusion.params()) {
    for (auto& v : e.value.data()) v += std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
  }
  return c;
}

GradCheckReport check_stage(Stage stage, std::uint64_t seed, double tol) {
  Rng rng(seed);
  ClientState c = small_client(seed, rng);
  set_stage(c, stage);
  const ProtocolConfig cfg = small_protocol();
  std::vector<ParamSet*> sets{&c.local_body.params(), &c.local_head.params(), &c.fusion.params(),
                              &c.bypass.body.params(), &c.bypass.head.params()};
  return finite_difference_check(
      sets,
      [&](Tape& t) { return stage_loss(t, c, t.constant(c.train.features), c.train.labels, cfg, stage); }, tol);
}

GradCheckReport check_fusion(std::uint64_t seed, double tol) {
  Rng rng(seed);
  const std::size_t g = 4;
  const std::size_t ch = 6;
  FusionProjection proj(g, ch, derive_seed(seed, {2}));
  for (auto& e : proj.params()) {
    for (auto& v : e.value.data()) v += std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
  }
  ParamSet features;
  features.add("x_g", random_tensor({kBatch, g}, rng, -2.0, 2.0));
  features.add("x_l", random_tensor({kBatch, ch}, rng, -2.0, 2.0));
  const Tensor r = random_tensor({kBatch, g}, rng);
  std::vector<ParamSet*> sets{&proj.params(), &features};
  return finite_difference_check(
      sets,
      [&](Tape& t) {
        Var x_hat = resample_global(t, t.param(features, "x_g"), proj);
        Var x_l = t.param(features, "x_l");
        Var x_lf = fuse_local(x_hat, x_l, fusion_weights(x_hat, x_l));
        return project(resample_fused(t, x_lf, proj), r);
      },
      tol);
}

GradCheckReport check_cross_entropy(std::uint64_t seed, double tol) {
  Rng rng(seed);
  ParamSet p;
  p.add("logits", random_tensor({kBatch, kClasses}, rng, -3.0, 3.0));
  const auto labels = random_labels(kBatch, kClasses, rng);
  std::vector<ParamSet*> sets{&p};
  return finite_difference_check(
      sets, [&](Tape& t) { return cross_entropy(t.param(p, "logits"), labels); }, tol);
}

GradCheckReport check_dice(std::uint64_t seed, double tol) {
  Rng rng(seed);
  ParamSet p;
  p.add("z", random_tensor({kBatch, 8}, rng, -2.0, 2.0));
  Tensor target({kBatch, 8});
  std::bernoulli_distribution coin(0.5);
  for (auto& v : target.data()) v = coin(rng) ? 1.0 : 0.0;
  std::vector<ParamSet*> sets{&p};
  return finite_difference_check(
      sets, [&](Tape& t) { return dice_loss(softmax(t.param(p, "z")), target); }, tol);
}

}  // namespace

std::vector<std::string> grad_suite_cases() {
  return {"dense", "relu", "softmax_output", "cross_entropy", "dice_loss", "fusion", "local_stage_loss",
          "global_stage_loss"};
}

GradCheckReport run_grad_check_case(const std::string& name, std::uint64_t seed, double tol) {
  const std::uint64_t s = derive_seed(seed, {0x67726164});
  if (name == "dense") return check_network({{LayerKind::dense, kIn, 4}}, false, s, tol);
  if (name == "relu") {
    return check_network({{LayerKind::dense, kIn, 5}, {LayerKind::relu, 5, 5}, {LayerKind::dense, 5, 3}}, false, s,
                         tol);
  }
  if (name == "softmax_output") {
    return check_network({{LayerKind::dense, kIn, 4}, {LayerKind::softmax_output, 4, 4}}, true, s, tol);
  }
  if (name == "cross_entropy") return check_cross_entropy(s, tol);
  if (name == "dice_loss") return check_dice(s, tol);
  if (name == "fusion") return check_fusion(s, tol);
  if (name == "local_stage_loss") return check_stage(Stage::local, s, tol);
  if (name == "global_stage_loss") return check_stage(Stage::global, s, tol);
  throw UsageError(fmt::format("unknown grad-check case '{}'", name));
}

GradSuiteResult run_grad_check_suite(std::size_t seeds, double tol) {
  GradSuiteResult result;
  for (const auto& name : grad_suite_cases()) {
    for (std::uint64_t seed = 0; seed < seeds; ++seed) {
      GradCheckReport report = run_grad_check_case(name, seed, tol);
      result.max_relative_error = std::max(result.max_relative_error, report.max_relative_error);
      result.passed = result.passed && report.passed;
      result.cases.push_back({name, seed, std::move(report)});
    }
  }
  return result;
}

std::string GradSuiteResult::summary() const {
  std::map<std::string, std::pair<double, bool>> worst;
  for (const auto& c : cases) {
    auto [it, fresh] = worst.try_emplace(c.name, c.report.max_relative_error, c.report.passed);
    if (!fresh) {
      it->second.first = std::max(it->second.first, c.report.max_relative_error);
      it->second.second = it->second.second && c.report.passed;
    }
  }
  std::string out;
  for (const auto& name : grad_suite_cases()) {
    const auto it = worst.find(name);
    if (it == worst.end()) continue;
    out += fmt::format("{:<20} max_rel_err={:.3e} {}\n", name, it->second.first, it->second.second ? "ok" : "FAIL");
  }
  return out;
}

}  // namespace bpfl
