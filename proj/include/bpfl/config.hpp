// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "bpfl/protocol.hpp"

namespace bpfl {

enum class Method { mh_pflgb, local_only, fedavg, fedavg_ft };
enum class Regime { resolution, label_skew };

std::string to_string(Method m);
std::string to_string(Regime r);

struct ExperimentConfig {
  Method method = Method::mh_pflgb;
  Regime regime = Regime::label_skew;

  std::vector<ClientArchitecture> clients;  // one per client
  std::vector<std::size_t> bypass;          // bypass body widths
  std::size_t rounds = 100;
  ProtocolConfig protocol;

  // Synthetic data.
  std::size_t samples = 2000;
  std::size_t features = 32;
  std::size_t classes = 4;
  double separation = 3.0;
  double alpha = 0.5;
  std::vector<std::size_t> resolution_factors;  // resolution regime only
  double test_fraction = 0.2;

  std::string out = "out";
  std::size_t checkpoint_every = 0;  // 0: only the final checkpoint

  std::size_t client_count() const { return clients.size(); }
};

/// All defaults for a regime: label-skew uses 8 clients and 4 classes,
/// resolution uses 4 clients at factors {1, 2, 4, 8} and 3 classes.
ExperimentConfig default_config(Regime regime = Regime::label_skew);

/// Parses `key = value` lines. `#` starts a comment; lists use brackets,
/// e.g. `clients = [[64, 32], [48]]`. Unknown or repeated keys are errors,
/// missing keys keep the regime defaults. Throws ConfigError with the line
/// number on syntax errors and with the field name on validation errors.
ExperimentConfig parse_config(std::string_view text);

/// Throws ConfigError naming the first invalid field.
void validate(const ExperimentConfig& cfg);

/// Canonical text form; parse_config(dump_config(c)) reproduces c.
std::string dump_config(const ExperimentConfig& cfg);

/// Hash of every field that shapes the training trajectory. `rounds`, `out`
/// and `checkpoint_every` are excluded so a longer run can resume from a
/// shorter one's checkpoint.
std::uint64_t config_hash(const ExperimentConfig& cfg);

}  // namespace bpfl
