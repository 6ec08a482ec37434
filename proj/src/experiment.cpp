// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#include "bpfl/experiment.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>

#include "bpfl/errors.hpp"
#include "bpfl/random.hpp"

namespace bpfl {

namespace {

constexpr std::string_view kCsvHeader = "round,client_id,stage_a_loss,stage_b_loss,acc,mf1";
constexpr std::size_t kHistoryColumns = 6;

bool uses_bypass(Method m) { return m == Method::mh_pflgb; }
bool uses_fedavg(Method m) { return m == Method::fedavg || m == Method::fedavg_ft; }

std::string client_set(int id, std::string_view part) { return fmt::format("client{}.{}", id, part); }

void replace_params(ParamSet& dst, const ParamSet& src, const std::string& what) {
  if (!aggregation_compatible(dst, src)) {
    throw IntegrityError(fmt::format("checkpoint set '{}' does not match this experiment's model", what));
  }
  dst = src;
}

ParamSet encode_history(const std::vector<RoundReport>& history) {
  ParamSet set;
  std::vector<double> rows;
  for (const auto& r : history) {
    for (const auto& m : r.clients) {
      rows.insert(rows.end(), {static_cast<double>(r.round), static_cast<double>(m.client_id), m.stage_a_loss,
                               m.stage_b_loss, m.acc, m.mf1});
    }
  }
  if (!rows.empty()) {
    const auto n = rows.size() / kHistoryColumns;
    set.add("rows", Tensor({n, kHistoryColumns}, std::move(rows)), false);
  }
  return set;
}

std::vector<RoundReport> decode_history(const ParamSet& set, bool aggregated) {
  std::vector<RoundReport> history;
  if (!set.contains("rows")) return history;
  const Tensor& t = set.at("rows");
  if (t.rank() != 2 || t.cols() != kHistoryColumns) throw IntegrityError("checkpoint history has the wrong shape");
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const auto round = static_cast<std::size_t>(t.at(r, 0));
    if (history.empty() || history.back().round != round) {
      history.emplace_back();
      history.back().round = round;
      history.back().aggregated = aggregated;
    }
    history.back().clients.push_back(
        {static_cast<int>(t.at(r, 1)), t.at(r, 2), t.at(r, 3), t.at(r, 4), t.at(r, 5)});
  }
  for (auto& r : history) r.finalize();
  return history;
}

void write_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot open {} for writing", path.string()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(fmt::format("write to {} failed", path.string()));
}

}  // namespace

std::vector<ClientData> build_client_data(const ExperimentConfig& cfg) {
  validate(cfg);
  const auto seed = cfg.protocol.seed;
  const Dataset ds = gen_blobs(cfg.samples, cfg.features, cfg.classes, cfg.separation,
                               derive_seed(seed, {tag(Stream::data)}));
  const auto k = cfg.client_count();
  const PartitionPlan plan = cfg.regime == Regime::label_skew
                                 ? partition_dirichlet(ds, k, cfg.alpha, derive_seed(seed, {tag(Stream::partition)}))
                                 : partition_iid(ds, k, derive_seed(seed, {tag(Stream::partition)}));
  std::vector<ClientData> out;
  for (std::size_t i = 0; i < k; ++i) {
    Dataset shard = ds.subset(plan[i]);
    if (cfg.regime == Regime::resolution) shard = resolution_shift(shard, cfg.resolution_factors[i]);
    if (shard.size() < 2) {
      throw ConfigError(fmt::format("client {} received {} sample(s); need at least 2 for a train/test split", i,
                                    shard.size()));
    }
    auto [train_idx, test_idx] =
        train_test_split(shard.size(), cfg.test_fraction, derive_seed(seed, {tag(Stream::split), i}));
    out.push_back({shard.subset(train_idx), shard.subset(test_idx)});
  }
  return out;
}

std::vector<ClientArchitecture> effective_architectures(const ExperimentConfig& cfg) {
  if (!uses_fedavg(cfg.method)) return cfg.clients;
  return std::vector<ClientArchitecture>(cfg.client_count(), cfg.clients.front());
}

ParamSet encode_optimizer(const OptimizerState& state) {
  ParamSet set;
  set.add("#step", Tensor::scalar(static_cast<double>(state.step)), false);
  for (const auto& [name, mo] : state.moments) {
    set.add(name + "#m", mo.m, false);
    set.add(name + "#v", mo.v, false);
    set.add(name + "#step", Tensor::scalar(static_cast<double>(mo.step)), false);
  }
  return set;
}

OptimizerState decode_optimizer(const ParamSet& set, OptimizerKind kind, double learning_rate) {
  OptimizerState state(kind, learning_rate);
  if (!set.contains("#step")) throw IntegrityError("optimizer set lacks '#step'");
  state.step = static_cast<std::uint64_t>(set.at("#step").item());
  for (const auto& e : set) {
    const auto hash = e.name.rfind('#');
    if (hash == std::string::npos) throw IntegrityError(fmt::format("bad optimizer entry '{}'", e.name));
    if (hash == 0) continue;
    const auto param = e.name.substr(0, hash);
    const auto field = std::string_view(e.name).substr(hash + 1);
    auto& mo = state.moments[param];
    if (field == "m") mo.m = e.value;
    else if (field == "v") mo.v = e.value;
    else if (field == "step") mo.step = static_cast<std::uint64_t>(e.value.item());
    else throw IntegrityError(fmt::format("bad optimizer entry '{}'", e.name));
  }
  for (const auto& [name, mo] : state.moments) {
    if (mo.m.shape() != mo.v.shape() || mo.m.size() == 0) {
      throw IntegrityError(fmt::format("incomplete optimizer moments for '{}'", name));
    }
  }
  return state;
}

Simulation::Simulation(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
  validate(cfg_);
  auto data = build_client_data(cfg_);
  const auto archs = effective_architectures(cfg_);
  if (archs != cfg_.clients) {
    notes_.push_back(fmt::format("{}: local architectures differ; every client uses client 0's widths",
                                 to_string(cfg_.method)));
  }
  server_ = make_bypass(cfg_.features, cfg_.bypass, cfg_.classes, cfg_.protocol.seed);
  for (std::size_t i = 0; i < data.size(); ++i) {
    clients_.push_back(make_client(static_cast<int>(i), archs[i], server_, std::move(data[i].train),
                                   std::move(data[i].test), cfg_.protocol));
  }
  if (uses_fedavg(cfg_.method)) fedavg_ = fedavg_init(clients_);
}

const RoundReport& Simulation::step() {
  if (done()) throw UsageError(fmt::format("all {} rounds already ran", cfg_.rounds));
  const auto r = round_ + 1;
  const auto& p = cfg_.protocol;
  switch (cfg_.method) {
    case Method::mh_pflgb:
      history_.push_back(run_round(server_, clients_, p, r));
      break;
    case Method::local_only:
      history_.push_back(local_only_round(clients_, p, r));
      break;
    case Method::fedavg:
    case Method::fedavg_ft:
      history_.push_back(fedavg_round(fedavg_, clients_, p, r));
      if (cfg_.method == Method::fedavg_ft && r == cfg_.rounds) fedavg_finetune(clients_, p, r, history_.back());
      break;
  }
  round_ = r;
  return history_.back();
}

void Simulation::run_to_end() {
  while (!done()) step();
}

Checkpoint Simulation::to_checkpoint() const {
  Checkpoint ck;
  ck.config_hash = config_hash(cfg_);
  ck.round = round_;
  ck.sets.emplace_back("server.bypass_body", server_.body.params());
  ck.sets.emplace_back("server.bypass_head", server_.head.params());
  if (uses_fedavg(cfg_.method)) {
    ck.sets.emplace_back("server.fedavg_body", fedavg_.body.params());
    ck.sets.emplace_back("server.fedavg_head", fedavg_.head.params());
  }
  for (const auto& c : clients_) {
    ck.sets.emplace_back(client_set(c.id, "local_body"), c.local_body.params());
    ck.sets.emplace_back(client_set(c.id, "local_head"), c.local_head.params());
    ck.sets.emplace_back(client_set(c.id, "fusion"), c.fusion.params());
    ck.sets.emplace_back(client_set(c.id, "bypass_body"), c.bypass.body.params());
    ck.sets.emplace_back(client_set(c.id, "bypass_head"), c.bypass.head.params());
    ck.sets.emplace_back(client_set(c.id, "opt_local"), encode_optimizer(c.opt_local));
    ck.sets.emplace_back(client_set(c.id, "opt_global"), encode_optimizer(c.opt_global));
  }
  ck.sets.emplace_back("history", encode_history(history_));
  return ck;
}

std::optional<std::string> Simulation::restore(const Checkpoint& ck) {
  std::optional<std::string> warning;
  if (ck.config_hash != config_hash(cfg_)) {
    warning = fmt::format("checkpoint config hash {:016x} differs from the current config {:016x}", ck.config_hash,
                          config_hash(cfg_));
  }
  auto history = decode_history(ck.get("history"), uses_bypass(cfg_.method) || uses_fedavg(cfg_.method));
  if (history.size() != ck.round) {
    throw IntegrityError(fmt::format("checkpoint at round {} holds {} rounds of history", ck.round, history.size()));
  }

  // Stage everything on copies so a bad checkpoint leaves *this untouched.
  GlobalBypass server = server_;
  FedAvgModel fedavg = fedavg_;
  std::vector<ClientState> clients = clients_;
  replace_params(server.body.params(), ck.get("server.bypass_body"), "server.bypass_body");
  replace_params(server.head.params(), ck.get("server.bypass_head"), "server.bypass_head");
  if (uses_fedavg(cfg_.method)) {
    replace_params(fedavg.body.params(), ck.get("server.fedavg_body"), "server.fedavg_body");
    replace_params(fedavg.head.params(), ck.get("server.fedavg_head"), "server.fedavg_head");
  }
  const auto& p = cfg_.protocol;
  for (auto& c : clients) {
    auto load = [&](ParamSet& dst, std::string_view part) {
      const auto name = client_set(c.id, part);
      replace_params(dst, ck.get(name), name);
    };
    load(c.local_body.params(), "local_body");
    load(c.local_head.params(), "local_head");
    load(c.fusion.params(), "fusion");
    load(c.bypass.body.params(), "bypass_body");
    load(c.bypass.head.params(), "bypass_head");
    c.opt_local = decode_optimizer(ck.get(client_set(c.id, "opt_local")), p.optimizer, p.lr_local);
    c.opt_global = decode_optimizer(ck.get(client_set(c.id, "opt_global")), p.optimizer, p.lr_global);
  }
  server_ = std::move(server);
  fedavg_ = std::move(fedavg);
  clients_ = std::move(clients);
  history_ = std::move(history);
  round_ = ck.round;
  return warning;
}

ParamCountReport Simulation::param_counts() const {
  AblationFlags flags = cfg_.protocol.ablation;
  if (!uses_bypass(cfg_.method)) flags = {true, true, true};
  return param_count_report(clients_, flags);
}

Summary summarize(const std::vector<RoundReport>& history) {
  Summary s;
  s.rounds = history.size();
  for (const auto& r : history) s.aggregation_events += r.aggregated ? 1 : 0;
  if (history.empty()) return s;
  s.clients = history.back().clients;
  for (const auto& m : s.clients) {
    s.average_acc += m.acc;
    s.average_mf1 += m.mf1;
  }
  if (!s.clients.empty()) {
    s.average_acc /= static_cast<double>(s.clients.size());
    s.average_mf1 /= static_cast<double>(s.clients.size());
  }
  return s;
}

std::string format_table(const Summary& summary, const std::vector<std::string>& column_labels) {
  std::vector<std::string> header{"Metric"};
  for (std::size_t i = 0; i < summary.clients.size(); ++i) {
    header.push_back(i < column_labels.size() ? column_labels[i]
                                              : fmt::format("Client {}", summary.clients[i].client_id + 1));
  }
  header.emplace_back("Average");
  std::vector<std::string> acc{"ACC"};
  std::vector<std::string> mf1{"MF1"};
  for (const auto& m : summary.clients) {
    acc.push_back(fmt::format("{:.4f}", m.acc));
    mf1.push_back(fmt::format("{:.4f}", m.mf1));
  }
  acc.push_back(fmt::format("{:.4f}", summary.average_acc));
  mf1.push_back(fmt::format("{:.4f}", summary.average_mf1));

  std::vector<std::size_t> width(header.size());
  for (const auto* row : {&header, &acc, &mf1}) {
    for (std::size_t i = 0; i < row->size(); ++i) width[i] = std::max(width[i], (*row)[i].size());
  }
  std::string out;
  for (const auto* row : {&header, &acc, &mf1}) {
    for (std::size_t i = 0; i < row->size(); ++i) {
      out += i == 0 ? fmt::format("{:<{}}", (*row)[i], width[i]) : fmt::format(" | {:>{}}", (*row)[i], width[i]);
    }
    out += '\n';
  }
  return out;
}

void write_metrics_csv(std::ostream& out, const std::vector<RoundReport>& history) {
  out << kCsvHeader << '\n';
  for (const auto& r : history) {
    for (const auto& m : r.clients) {
      fmt::print(out, "{},{},{},{},{},{}\n", r.round, m.client_id, m.stage_a_loss, m.stage_b_loss, m.acc, m.mf1);
    }
  }
}

std::vector<RoundReport> read_metrics_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw ConfigError(fmt::format("line 1: expected header '{}'", kCsvHeader));
  }
  std::vector<RoundReport> history;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string_view> cells;
    std::string_view rest(line);
    for (;;) {
      const auto comma = rest.find(',');
      cells.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (cells.size() != kHistoryColumns) {
      throw ConfigError(fmt::format("line {}: expected {} columns, got {}", line_no, kHistoryColumns, cells.size()));
    }
    auto num = [&](std::string_view cell, auto& value) {
      auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (ec != std::errc() || p != cell.data() + cell.size()) {
        throw ConfigError(fmt::format("line {}: bad number '{}'", line_no, cell));
      }
    };
    std::size_t round = 0;
    ClientRoundMetrics m;
    num(cells[0], round);
    num(cells[1], m.client_id);
    num(cells[2], m.stage_a_loss);
    num(cells[3], m.stage_b_loss);
    num(cells[4], m.acc);
    num(cells[5], m.mf1);
    if (history.empty() || history.back().round != round) {
      if (!history.empty() && round < history.back().round) {
        throw ConfigError(fmt::format("line {}: round {} after round {}", line_no, round, history.back().round));
      }
      history.emplace_back();
      history.back().round = round;
    }
    history.back().clients.push_back(m);
  }
  for (auto& r : history) r.finalize();
  return history;
}

std::string summary_json(const Summary& summary, const ExperimentConfig* cfg) {
  using nlohmann::ordered_json;
  ordered_json j;
  if (cfg != nullptr) {
    j["method"] = to_string(cfg->method);
    j["regime"] = to_string(cfg->regime);
    j["seed"] = cfg->protocol.seed;
    j["config_hash"] = fmt::format("{:016x}", config_hash(*cfg));
  }
  j["rounds"] = summary.rounds;
  j["aggregation_events"] = summary.aggregation_events;
  ordered_json clients = ordered_json::array();
  for (const auto& m : summary.clients) {
    ordered_json c;
    c["client_id"] = m.client_id;
    if (cfg != nullptr && cfg->regime == Regime::resolution &&
        static_cast<std::size_t>(m.client_id) < cfg->resolution_factors.size()) {
      c["resolution_factor"] = cfg->resolution_factors[static_cast<std::size_t>(m.client_id)];
    }
    c["acc"] = m.acc;
    c["mf1"] = m.mf1;
    clients.push_back(std::move(c));
  }
  j["clients"] = std::move(clients);
  j["average"] = {{"acc", summary.average_acc}, {"mf1", summary.average_mf1}};
  return j.dump(2) + "\n";
}

Summary run_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
  auto say = [&](const std::string& line) {
    if (options.log != nullptr) *options.log << line << '\n';
  };
  const std::filesystem::path out_dir(cfg.out);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(fmt::format("cannot create output directory {}: {}", out_dir.string(), ec.message()));
  if (cfg.checkpoint_every > 0) {
    std::filesystem::create_directories(out_dir / "checkpoints", ec);
    if (ec) throw Error(fmt::format("cannot create {}: {}", (out_dir / "checkpoints").string(), ec.message()));
  }

  Simulation sim(cfg);
  for (const auto& n : sim.notes()) say(fmt::format("note: {}", n));
  if (options.resume) {
    if (auto warning = sim.restore(load_checkpoint(*options.resume))) say(fmt::format("warning: {}", *warning));
    say(fmt::format("resumed from {} at round {}", options.resume->string(), sim.round()));
  }
  while (!sim.done()) {
    const auto& r = sim.step();
    say(fmt::format("round {}/{}: acc {:.4f} mf1 {:.4f}", r.round, cfg.rounds, r.mean_acc, r.mean_mf1));
    if (cfg.checkpoint_every > 0 && r.round % cfg.checkpoint_every == 0) {
      save_checkpoint(out_dir / "checkpoints" / fmt::format("round_{:04d}.bpfl", r.round), sim.to_checkpoint());
    }
  }

  const auto summary = summarize(sim.history());
  std::ostringstream csv;
  write_metrics_csv(csv, sim.history());
  write_file(out_dir / "metrics.csv", csv.str());
  write_file(out_dir / "summary.json", summary_json(summary, &cfg));
  write_file(out_dir / "param_count.txt", sim.param_counts().to_text());

  std::string log;
  log += fmt::format("method {} regime {} seed {} rounds {}\n", to_string(cfg.method), to_string(cfg.regime),
                     cfg.protocol.seed, cfg.rounds);
  for (const auto& n : sim.notes()) log += fmt::format("note: {}\n", n);
  for (const auto& r : sim.history()) {
    if (r.aggregated) log += fmt::format("round {}: aggregation over {} clients\n", r.round, r.clients.size());
  }
  log += format_table(summary);
  write_file(out_dir / "run.log", log);
  save_checkpoint(out_dir / "checkpoint.bpfl", sim.to_checkpoint());
  return summary;
}

}  // namespace bpfl
