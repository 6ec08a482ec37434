// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bpfl/tensor.hpp"

namespace bpfl {

struct DatasetMeta {
  std::string generator;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> params;

  friend bool operator==(const DatasetMeta&, const DatasetMeta&) = default;
};

/// Feature matrix [n, d] with one class index per row.
struct Dataset {
  Tensor features;
  std::vector<int> labels;
  std::size_t classes = 0;
  DatasetMeta meta;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }

  /// Rows in the given order; metadata records the parent generator.
  Dataset subset(std::span<const std::size_t> indices) const;
  /// Per-class sample counts.
  std::vector<std::size_t> class_histogram() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Client id -> indices into a parent dataset.
using PartitionPlan = std::vector<std::vector<std::size_t>>;

/// Throws ConfigError unless the plan is disjoint, non-empty per client and
/// covers [0, n).
void validate_partition(const PartitionPlan& plan, std::size_t n);

/// C unit-covariance Gaussian clusters whose means sit on a seeded regular
/// simplex (pairwise distance `separation`). Labels cycle 0..C-1 so classes
/// are balanced to within one sample.
Dataset gen_blobs(std::size_t n, std::size_t d, std::size_t classes, double separation, std::uint64_t seed);

/// Label-skewed split: for each class, shares drawn from Dirichlet(alpha * 1_K)
/// decide how its samples are dealt to the K clients. Empty clients are
/// topped up one sample at a time from the largest shard.
PartitionPlan partition_dirichlet(const Dataset& ds, std::size_t clients, double alpha, std::uint64_t seed);

/// Shuffled near-equal split.
PartitionPlan partition_iid(const Dataset& ds, std::size_t clients, std::uint64_t seed);

/// Averages each run of `factor` consecutive coordinates and writes the mean
/// back over the run, keeping d fixed. factor must be 1, 2, 4 or 8.
Dataset resolution_shift(const Dataset& ds, std::size_t factor);

/// Shuffles `n` indices and returns (train, test) with
/// max(1, floor(test_fraction * n)) test samples. Requires n >= 2.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> train_test_split(std::size_t n, double test_fraction,
                                                                               std::uint64_t seed);

/// CSV with header `label,x0,...,x{d-1}`, doubles printed round-trip exact.
void write_dataset_csv(std::ostream& out, const Dataset& ds);

}  // namespace bpfl
