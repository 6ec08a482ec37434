// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

// bpfl: run experiments, check gradients, count parameters, re-derive reports.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "bpfl/config.hpp"
#include "bpfl/errors.hpp"
#include "bpfl/experiment.hpp"
#include "bpfl/grad_suite.hpp"

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw bpfl::Error(fmt::format("cannot open {}", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bpfl::ExperimentConfig load_config(const std::string& path) {
  try {
    return bpfl::parse_config(read_text(path));
  } catch (const bpfl::ConfigError& e) {
    throw bpfl::ConfigError(fmt::format("{}: {}", path, e.what()));
  }
}

std::size_t thread_cap(std::size_t clients) {
  std::size_t n = std::max(1U, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("BPFL_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const auto v = std::strtoull(env, &end, 10);
    if (*end != '\0' || v == 0) throw bpfl::UsageError(fmt::format("BPFL_THREADS must be a positive integer, got '{}'", env));
    n = static_cast<std::size_t>(v);
  }
  return std::min(n, std::max<std::size_t>(1, clients));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning simulator with a shared global bypass model"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run an experiment and write its artifacts");
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> resume;
  bool quiet = false;
  run->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--out", out_dir, "Override the output directory");
  run->add_option("--resume", resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  run->add_flag("--quiet", quiet, "Suppress per-round progress");

  auto* grad = app.add_subcommand("grad-check", "Compare analytic and finite-difference gradients");
  std::size_t seeds = 20;
  double tolerance = 1e-4;
  bool verbose = false;
  grad->add_option("--seeds", seeds, "Seeds per case")->check(CLI::PositiveNumber);
  grad->add_option("--tolerance", tolerance, "Maximum relative error")->check(CLI::PositiveNumber);
  grad->add_flag("--verbose", verbose, "Print every parameter");

  auto* count = app.add_subcommand("param-count", "Parameter counts of the local models and the bypass");
  std::string count_config;
  count->add_option("--config", count_config, "Config file")->required()->check(CLI::ExistingFile);

  auto* report = app.add_subcommand("report", "Re-derive the summary from a metrics CSV");
  std::string csv_path;
  bool as_json = false;
  report->add_option("--csv", csv_path, "metrics.csv")->required()->check(CLI::ExistingFile);
  report->add_flag("--json", as_json, "Print summary JSON instead of the table");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      auto cfg = load_config(config_path);
      if (seed) cfg.protocol.seed = *seed;
      if (out_dir) cfg.out = *out_dir;
      cfg.protocol.threads = thread_cap(cfg.client_count());
      bpfl::RunOptions opts;
      if (resume) opts.resume = *resume;
      opts.log = quiet ? nullptr : &std::cerr;
      const auto summary = bpfl::run_experiment(cfg, opts);
      std::cout << bpfl::format_table(summary);
      std::cout << fmt::format("artifacts written to {}\n", cfg.out);
    } else if (*grad) {
      const auto result = bpfl::run_grad_check_suite(seeds, tolerance);
      std::cout << result.summary();
      if (verbose) {
        for (const auto& c : result.cases) std::cout << fmt::format("{} seed {}\n{}", c.name, c.seed, c.report.summary());
      }
      std::cout << fmt::format("grad-check {} (max relative error {:.3e}, tolerance {:.1e})\n",
                               result.passed ? "passed" : "FAILED", result.max_relative_error, tolerance);
      return result.passed ? 0 : 1;
    } else if (*count) {
      const auto cfg = load_config(count_config);
      const bpfl::Simulation sim(cfg);
      std::cout << sim.param_counts().to_text();
    } else if (*report) {
      std::ifstream in(csv_path);
      const auto summary = bpfl::summarize(bpfl::read_metrics_csv(in));
      std::cout << (as_json ? bpfl::summary_json(summary, nullptr) : bpfl::format_table(summary));
    }
  } catch (const bpfl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
