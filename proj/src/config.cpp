// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#include "bpfl/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <variant>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "bpfl/errors.hpp"

namespace bpfl {

std::string to_string(Method m) {
  switch (m) {
    case Method::mh_pflgb:
      return "mh-pflgb";
    case Method::local_only:
      return "local-only";
    case Method::fedavg:
      return "fedavg";
    case Method::fedavg_ft:
      return "fedavg-ft";
  }
  return "unknown";
}

std::string to_string(Regime r) { return r == Regime::resolution ? "resolution" : "label-skew"; }

ExperimentConfig default_config(Regime regime) {
  ExperimentConfig cfg;
  cfg.regime = regime;
  cfg.bypass = {8};
  if (regime == Regime::label_skew) {
    cfg.classes = 4;
    cfg.clients = {{{64, 32}}, {{48}}, {{96, 24}}, {{32, 32}}, {{80, 40}}, {{40}}, {{64, 48, 32}}, {{56}}};
  } else {
    cfg.classes = 3;
    cfg.clients = {{{64, 64, 48, 32}}, {{64, 48, 32}}, {{48, 32}}, {{40}}};
    cfg.resolution_factors = {1, 2, 4, 8};
  }
  return cfg;
}

namespace {

struct Value {
  std::variant<std::string, std::vector<Value>> data;

  bool is_list() const { return std::holds_alternative<std::vector<Value>>(data); }
};

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

class ValueParser {
 public:
  ValueParser(std::string_view text, std::size_t line) : text_(text), line_(line) {}

  Value parse() {
    Value v = parse_value();
    skip_space();
    if (pos_ != text_.size()) fail(fmt::format("unexpected '{}'", text_.substr(pos_)));
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError(fmt::format("line {}: {}", line_, what));
  }

  void skip_space() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
  }

  Value parse_value() {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == '[') return parse_list();
    const auto start = pos_;
    while (pos_ < text_.size() && text_[pos_] != ',' && text_[pos_] != '[' && text_[pos_] != ']') ++pos_;
    auto atom = trim(text_.substr(start, pos_ - start));
    if (atom.empty()) fail("missing value");
    return Value{std::string(atom)};
  }

  Value parse_list() {
    ++pos_;  // '['
    std::vector<Value> items;
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == ']') {
      ++pos_;
      return Value{std::move(items)};
    }
    for (;;) {
      items.push_back(parse_value());
      skip_space();
      if (pos_ >= text_.size()) fail("unterminated list");
      if (text_[pos_] == ',') {
        ++pos_;
        continue;
      }
      if (text_[pos_] == ']') {
        ++pos_;
        return Value{std::move(items)};
      }
      fail(fmt::format("expected ',' or ']' in list, got '{}'", text_[pos_]));
    }
  }

  std::string_view text_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

struct Item {
  std::string key;
  Value value;
  std::size_t line;
};

[[noreturn]] void bad(const Item& it, const std::string& what) {
  throw ConfigError(fmt::format("line {}: {}: {}", it.line, it.key, what));
}

const std::string& atom(const Item& it, const Value& v) {
  if (v.is_list()) bad(it, "expected a scalar, got a list");
  return std::get<std::string>(v.data);
}

std::size_t as_size(const Item& it, const Value& v) {
  const auto& s = atom(it, v);
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || p != s.data() + s.size()) bad(it, fmt::format("'{}' is not a non-negative integer", s));
  return out;
}

std::uint64_t as_u64(const Item& it, const Value& v) {
  const auto& s = atom(it, v);
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || p != s.data() + s.size()) bad(it, fmt::format("'{}' is not a non-negative integer", s));
  return out;
}

double as_double(const Item& it, const Value& v) {
  const auto& s = atom(it, v);
  double out = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(out)) {
    bad(it, fmt::format("'{}' is not a finite number", s));
  }
  return out;
}

bool as_bool(const Item& it, const Value& v) {
  const auto& s = atom(it, v);
  if (s == "true") return true;
  if (s == "false") return false;
  bad(it, fmt::format("'{}' is not true/false", s));
}

std::vector<std::size_t> as_sizes(const Item& it, const Value& v) {
  if (!v.is_list()) bad(it, "expected a list like [64, 32]");
  std::vector<std::size_t> out;
  for (const auto& e : std::get<std::vector<Value>>(v.data)) out.push_back(as_size(it, e));
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const Item&)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"method",
       [](ExperimentConfig& c, const Item& it) {
         const auto& s = atom(it, it.value);
         if (s == "mh-pflgb") c.method = Method::mh_pflgb;
         else if (s == "local-only") c.method = Method::local_only;
         else if (s == "fedavg") c.method = Method::fedavg;
         else if (s == "fedavg-ft") c.method = Method::fedavg_ft;
         else bad(it, fmt::format("unknown method '{}'", s));
       }},
      {"regime", [](ExperimentConfig&, const Item&) {}},  // applied before everything else
      {"clients",
       [](ExperimentConfig& c, const Item& it) {
         if (!it.value.is_list()) bad(it, "expected a list of width lists");
         c.clients.clear();
         for (const auto& e : std::get<std::vector<Value>>(it.value.data)) c.clients.push_back({as_sizes(it, e)});
       }},
      {"bypass", [](ExperimentConfig& c, const Item& it) { c.bypass = as_sizes(it, it.value); }},
      {"rounds", [](ExperimentConfig& c, const Item& it) { c.rounds = as_size(it, it.value); }},
      {"epochs_local", [](ExperimentConfig& c, const Item& it) { c.protocol.epochs_local = as_size(it, it.value); }},
      {"epochs_global", [](ExperimentConfig& c, const Item& it) { c.protocol.epochs_global = as_size(it, it.value); }},
      {"batch_size", [](ExperimentConfig& c, const Item& it) { c.protocol.batch_size = as_size(it, it.value); }},
      {"lr_local", [](ExperimentConfig& c, const Item& it) { c.protocol.lr_local = as_double(it, it.value); }},
      {"lr_global", [](ExperimentConfig& c, const Item& it) { c.protocol.lr_global = as_double(it, it.value); }},
      {"optimizer",
       [](ExperimentConfig& c, const Item& it) {
         const auto& s = atom(it, it.value);
         if (s == "adam") c.protocol.optimizer = OptimizerKind::adam;
         else if (s == "sgd") c.protocol.optimizer = OptimizerKind::sgd;
         else bad(it, fmt::format("unknown optimizer '{}'", s));
       }},
      {"lambda_l_loc",
       [](ExperimentConfig& c, const Item& it) { c.protocol.loss_weights.lambda_l_loc = as_double(it, it.value); }},
      {"lambda_g_loc",
       [](ExperimentConfig& c, const Item& it) { c.protocol.loss_weights.lambda_g_loc = as_double(it, it.value); }},
      {"lambda_g_glob",
       [](ExperimentConfig& c, const Item& it) { c.protocol.loss_weights.lambda_g_glob = as_double(it, it.value); }},
      {"lambda_l_glob",
       [](ExperimentConfig& c, const Item& it) { c.protocol.loss_weights.lambda_l_glob = as_double(it, it.value); }},
      {"aggregation",
       [](ExperimentConfig& c, const Item& it) {
         const auto& s = atom(it, it.value);
         if (s == "samples") c.protocol.aggregation = AggregationWeighting::samples;
         else if (s == "uniform") c.protocol.aggregation = AggregationWeighting::uniform;
         else bad(it, fmt::format("unknown aggregation weighting '{}'", s));
       }},
      {"reset_optimizer",
       [](ExperimentConfig& c, const Item& it) { c.protocol.reset_optimizer = as_bool(it, it.value); }},
      {"finetune_epochs",
       [](ExperimentConfig& c, const Item& it) { c.protocol.finetune_epochs = as_size(it, it.value); }},
      {"seed", [](ExperimentConfig& c, const Item& it) { c.protocol.seed = as_u64(it, it.value); }},
      {"no_global_head",
       [](ExperimentConfig& c, const Item& it) { c.protocol.ablation.no_global_head = as_bool(it, it.value); }},
      {"no_global_body",
       [](ExperimentConfig& c, const Item& it) { c.protocol.ablation.no_global_body = as_bool(it, it.value); }},
      {"no_fusion", [](ExperimentConfig& c, const Item& it) { c.protocol.ablation.no_fusion = as_bool(it, it.value); }},
      {"samples", [](ExperimentConfig& c, const Item& it) { c.samples = as_size(it, it.value); }},
      {"features", [](ExperimentConfig& c, const Item& it) { c.features = as_size(it, it.value); }},
      {"classes", [](ExperimentConfig& c, const Item& it) { c.classes = as_size(it, it.value); }},
      {"separation", [](ExperimentConfig& c, const Item& it) { c.separation = as_double(it, it.value); }},
      {"alpha", [](ExperimentConfig& c, const Item& it) { c.alpha = as_double(it, it.value); }},
      {"resolution_factors",
       [](ExperimentConfig& c, const Item& it) { c.resolution_factors = as_sizes(it, it.value); }},
      {"test_fraction", [](ExperimentConfig& c, const Item& it) { c.test_fraction = as_double(it, it.value); }},
      {"out", [](ExperimentConfig& c, const Item& it) { c.out = atom(it, it.value); }},
      {"checkpoint_every", [](ExperimentConfig& c, const Item& it) { c.checkpoint_every = as_size(it, it.value); }},
  };
  return table;
}

[[noreturn]] void invalid(std::string_view field, const std::string& what) {
  throw ConfigError(fmt::format("{}: {}", field, what));
}

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
  std::vector<Item> items;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(fmt::format("line {}: expected 'key = value'", line_no));
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError(fmt::format("line {}: missing key", line_no));
    if (!setters().contains(key)) throw ConfigError(fmt::format("line {}: unknown key '{}'", line_no, key));
    if (!seen.insert(key).second) throw ConfigError(fmt::format("line {}: duplicate key '{}'", line_no, key));
    items.push_back({key, ValueParser(trim(line.substr(eq + 1)), line_no).parse(), line_no});
  }

  Regime regime = Regime::label_skew;
  for (const auto& it : items) {
    if (it.key != "regime") continue;
    const auto& s = atom(it, it.value);
    if (s == "resolution") regime = Regime::resolution;
    else if (s == "label-skew") regime = Regime::label_skew;
    else bad(it, fmt::format("unknown regime '{}'", s));
  }
  ExperimentConfig cfg = default_config(regime);
  for (const auto& it : items) setters().at(it.key)(cfg, it);
  validate(cfg);
  return cfg;
}

void validate(const ExperimentConfig& c) {
  const auto& p = c.protocol;
  if (c.rounds < 1) invalid("rounds", "must be >= 1");
  if (p.epochs_local < 1) invalid("epochs_local", "must be >= 1");
  if (p.epochs_global < 1) invalid("epochs_global", "must be >= 1");
  if (p.batch_size < 1) invalid("batch_size", "must be >= 1");
  if (!(p.lr_local > 0.0)) invalid("lr_local", "must be > 0");
  if (!(p.lr_global > 0.0)) invalid("lr_global", "must be > 0");
  const auto& w = p.loss_weights;
  if (!(w.lambda_l_loc >= 0.0)) invalid("lambda_l_loc", "must be >= 0");
  if (!(w.lambda_g_loc >= 0.0)) invalid("lambda_g_loc", "must be >= 0");
  if (!(w.lambda_g_glob >= 0.0)) invalid("lambda_g_glob", "must be >= 0");
  if (!(w.lambda_l_glob >= 0.0)) invalid("lambda_l_glob", "must be >= 0");
  if (c.method == Method::fedavg_ft && p.finetune_epochs < 1) invalid("finetune_epochs", "must be >= 1 for fedavg-ft");
  if (c.clients.empty()) invalid("clients", "needs at least one client");
  for (std::size_t k = 0; k < c.clients.size(); ++k) {
    const auto& widths = c.clients[k].body_widths;
    if (widths.empty()) invalid("clients", fmt::format("client {} has no layers", k));
    for (auto wd : widths) {
      if (wd == 0) invalid("clients", fmt::format("client {} has a zero width", k));
    }
  }
  if (c.bypass.empty()) invalid("bypass", "needs at least one width");
  for (auto wd : c.bypass) {
    if (wd == 0) invalid("bypass", "zero width");
  }
  if (c.classes < 1) invalid("classes", "must be >= 1");
  if (c.features < c.classes) invalid("features", fmt::format("must be >= classes ({})", c.classes));
  if (c.samples < c.classes) invalid("samples", fmt::format("must be >= classes ({})", c.classes));
  if (c.samples < 2 * c.clients.size()) {
    invalid("samples", fmt::format("must give every one of {} clients a train and a test sample", c.clients.size()));
  }
  if (!(c.separation > 0.0)) invalid("separation", "must be > 0");
  if (!(c.alpha > 0.0)) invalid("alpha", "must be > 0");
  if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) invalid("test_fraction", "must lie in (0, 1)");
  if (c.regime == Regime::resolution) {
    if (c.resolution_factors.size() != c.clients.size()) {
      invalid("resolution_factors", fmt::format("needs one factor per client ({}), got {}", c.clients.size(),
                                                c.resolution_factors.size()));
    }
    for (auto f : c.resolution_factors) {
      if (f != 1 && f != 2 && f != 4 && f != 8) invalid("resolution_factors", fmt::format("{} is not 1, 2, 4 or 8", f));
      if (c.features % f != 0) invalid("resolution_factors", fmt::format("features {} not divisible by {}", c.features, f));
    }
  }
  if (c.out.empty()) invalid("out", "must not be empty");
}

namespace {

std::string widths_list(const std::vector<std::size_t>& w) { return fmt::format("[{}]", fmt::join(w, ", ")); }

std::string trajectory_fields(const ExperimentConfig& c) {
  const auto& p = c.protocol;
  const auto& w = p.loss_weights;
  std::vector<std::string> client_lists;
  for (const auto& a : c.clients) client_lists.push_back(widths_list(a.body_widths));
  std::string s;
  s += fmt::format("method = {}\n", to_string(c.method));
  s += fmt::format("regime = {}\n", to_string(c.regime));
  s += fmt::format("clients = [{}]\n", fmt::join(client_lists, ", "));
  s += fmt::format("bypass = {}\n", widths_list(c.bypass));
  s += fmt::format("epochs_local = {}\n", p.epochs_local);
  s += fmt::format("epochs_global = {}\n", p.epochs_global);
  s += fmt::format("batch_size = {}\n", p.batch_size);
  s += fmt::format("lr_local = {}\n", p.lr_local);
  s += fmt::format("lr_global = {}\n", p.lr_global);
  s += fmt::format("optimizer = {}\n", to_string(p.optimizer));
  s += fmt::format("lambda_l_loc = {}\n", w.lambda_l_loc);
  s += fmt::format("lambda_g_loc = {}\n", w.lambda_g_loc);
  s += fmt::format("lambda_g_glob = {}\n", w.lambda_g_glob);
  s += fmt::format("lambda_l_glob = {}\n", w.lambda_l_glob);
  s += fmt::format("aggregation = {}\n", p.aggregation == AggregationWeighting::samples ? "samples" : "uniform");
  s += fmt::format("reset_optimizer = {}\n", p.reset_optimizer);
  s += fmt::format("finetune_epochs = {}\n", p.finetune_epochs);
  s += fmt::format("seed = {}\n", p.seed);
  s += fmt::format("no_global_head = {}\n", p.ablation.no_global_head);
  s += fmt::format("no_global_body = {}\n", p.ablation.no_global_body);
  s += fmt::format("no_fusion = {}\n", p.ablation.no_fusion);
  s += fmt::format("samples = {}\n", c.samples);
  s += fmt::format("features = {}\n", c.features);
  s += fmt::format("classes = {}\n", c.classes);
  s += fmt::format("separation = {}\n", c.separation);
  s += fmt::format("alpha = {}\n", c.alpha);
  s += fmt::format("resolution_factors = {}\n", widths_list(c.resolution_factors));
  s += fmt::format("test_fraction = {}\n", c.test_fraction);
  return s;
}

}  // namespace

std::string dump_config(const ExperimentConfig& c) {
  return fmt::format("rounds = {}\n{}out = {}\ncheckpoint_every = {}\n", c.rounds, trajectory_fields(c), c.out,
                     c.checkpoint_every);
}

std::uint64_t config_hash(const ExperimentConfig& c) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : trajectory_fields(c)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace bpfl
