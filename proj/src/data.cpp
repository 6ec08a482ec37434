// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#include "bpfl/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "bpfl/errors.hpp"
#include "bpfl/random.hpp"

namespace bpfl {

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw ConfigError("subset of no samples");
  const std::size_t d = dim();
  Dataset out;
  out.classes = classes;
  out.meta = meta;
  std::vector<double> data;
  data.reserve(indices.size() * d);
  for (auto i : indices) {
    if (i >= size()) throw StructuralError(fmt::format("subset index {} out of range {}", i, size()));
    data.insert(data.end(), features.raw() + i * d, features.raw() + (i + 1) * d);
    out.labels.push_back(labels[i]);
  }
  out.features = Tensor({indices.size(), d}, std::move(data));
  return out;
}

std::vector<std::size_t> Dataset::class_histogram() const {
  std::vector<std::size_t> h(classes, 0);
  for (int l : labels) ++h[static_cast<std::size_t>(l)];
  return h;
}

void validate_partition(const PartitionPlan& plan, std::size_t n) {
  std::vector<char> seen(n, 0);
  std::size_t total = 0;
  for (std::size_t k = 0; k < plan.size(); ++k) {
    if (plan[k].empty()) throw ConfigError(fmt::format("partition leaves client {} empty", k));
    for (auto i : plan[k]) {
      if (i >= n) throw ConfigError(fmt::format("partition index {} out of range {}", i, n));
      if (seen[i]) throw ConfigError(fmt::format("partition assigns sample {} twice", i));
      seen[i] = 1;
      ++total;
    }
  }
  if (total != n) throw ConfigError(fmt::format("partition covers {} of {} samples", total, n));
}

Dataset gen_blobs(std::size_t n, std::size_t d, std::size_t classes, double separation, std::uint64_t seed) {
  if (classes == 0 || d == 0) throw ConfigError("gen_blobs: need d >= 1 and C >= 1");
  if (n < classes) throw ConfigError(fmt::format("gen_blobs: n={} is smaller than C={}", n, classes));
  if (!(separation > 0.0)) throw ConfigError(fmt::format("gen_blobs: separation must be positive, got {}", separation));
  if (classes > d) throw ConfigError(fmt::format("gen_blobs: C={} clusters need d >= C, got d={}", classes, d));

  Rng rng(derive_seed(seed, {tag(Stream::data)}));
  std::normal_distribution<double> normal(0.0, 1.0);

  // Orthonormal directions scaled by separation/sqrt(2) are pairwise
  // `separation` apart; centering keeps the distances and puts the centroid at 0.
  std::vector<std::vector<double>> means(classes, std::vector<double>(d, 0.0));
  if (classes > 1) {
    for (std::size_t c = 0; c < classes; ++c) {
      auto& v = means[c];
      for (;;) {
        for (double& x : v) x = normal(rng);
        for (std::size_t p = 0; p < c; ++p) {
          const double dot = std::inner_product(v.begin(), v.end(), means[p].begin(), 0.0);
          for (std::size_t j = 0; j < d; ++j) v[j] -= dot * means[p][j];
        }
        const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
        if (norm > 1e-8) {
          for (double& x : v) x /= norm;
          break;
        }
      }
    }
    const double radius = separation / std::sqrt(2.0);
    std::vector<double> centroid(d, 0.0);
    for (auto& m : means) {
      for (std::size_t j = 0; j < d; ++j) {
        m[j] *= radius;
        centroid[j] += m[j] / static_cast<double>(classes);
      }
    }
    for (auto& m : means) {
      for (std::size_t j = 0; j < d; ++j) m[j] -= centroid[j];
    }
  }

  Dataset ds;
  ds.classes = classes;
  ds.labels.resize(n);
  std::vector<double> data(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = i % classes;
    ds.labels[i] = static_cast<int>(label);
    for (std::size_t j = 0; j < d; ++j) data[i * d + j] = means[label][j] + normal(rng);
  }
  ds.features = Tensor({n, d}, std::move(data));
  ds.meta = {"blobs",
             seed,
             {{"n", std::to_string(n)},
              {"d", std::to_string(d)},
              {"classes", std::to_string(classes)},
              {"separation", fmt::format("{}", separation)}}};
  return ds;
}

PartitionPlan partition_dirichlet(const Dataset& ds, std::size_t clients, double alpha, std::uint64_t seed) {
  if (clients == 0) throw ConfigError("partition_dirichlet: need at least one client");
  if (!(alpha > 0.0)) throw ConfigError(fmt::format("partition_dirichlet: alpha must be positive, got {}", alpha));
  if (ds.size() < clients) {
    throw ConfigError(fmt::format("partition_dirichlet: {} samples cannot cover {} clients", ds.size(), clients));
  }
  Rng rng(derive_seed(seed, {tag(Stream::partition)}));
  std::gamma_distribution<double> gamma(alpha, 1.0);

  PartitionPlan plan(clients);
  for (std::size_t c = 0; c < ds.classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (static_cast<std::size_t>(ds.labels[i]) == c) members.push_back(i);
    }
    std::shuffle(members.begin(), members.end(), rng);

    std::vector<double> share(clients);
    double total = 0.0;
    for (double& s : share) total += (s = gamma(rng));
    if (!(total > 0.0)) {
      // Every draw underflowed (tiny alpha): give the class to one client.
      std::fill(share.begin(), share.end(), 0.0);
      share[std::uniform_int_distribution<std::size_t>(0, clients - 1)(rng)] = 1.0;
      total = 1.0;
    }
    double cumulative = 0.0;
    std::size_t begin = 0;
    for (std::size_t k = 0; k < clients; ++k) {
      cumulative += share[k] / total;
      std::size_t end = k + 1 == clients
                            ? members.size()
                            : std::min(members.size(), static_cast<std::size_t>(std::llround(
                                                           cumulative * static_cast<double>(members.size()))));
      end = std::max(end, begin);
      plan[k].insert(plan[k].end(), members.begin() + static_cast<std::ptrdiff_t>(begin),
                     members.begin() + static_cast<std::ptrdiff_t>(end));
      begin = end;
    }
  }

  for (auto& shard : plan) {
    if (!shard.empty()) continue;
    auto largest = std::max_element(plan.begin(), plan.end(),
                                     [](const auto& a, const auto& b) { return a.size() < b.size(); });
    shard.push_back(largest->back());
    largest->pop_back();
  }
  for (auto& shard : plan) std::sort(shard.begin(), shard.end());
  return plan;
}

PartitionPlan partition_iid(const Dataset& ds, std::size_t clients, std::uint64_t seed) {
  if (clients == 0) throw ConfigError("partition_iid: need at least one client");
  if (ds.size() < clients) {
    throw ConfigError(fmt::format("partition_iid: {} samples cannot cover {} clients", ds.size(), clients));
  }
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {tag(Stream::partition)}));
  std::shuffle(order.begin(), order.end(), rng);
  PartitionPlan plan(clients);
  for (std::size_t i = 0; i < order.size(); ++i) plan[i % clients].push_back(order[i]);
  for (auto& shard : plan) std::sort(shard.begin(), shard.end());
  return plan;
}

Dataset resolution_shift(const Dataset& ds, std::size_t factor) {
  if (factor != 1 && factor != 2 && factor != 4 && factor != 8) {
    throw ConfigError(fmt::format("resolution_shift: factor must be 1, 2, 4 or 8, got {}", factor));
  }
  const std::size_t d = ds.dim();
  if (d % factor != 0) {
    throw ConfigError(fmt::format("resolution_shift: d={} is not divisible by factor {}", d, factor));
  }
  Dataset out = ds;
  out.meta.params["resolution_factor"] = std::to_string(factor);
  if (factor == 1) return out;
  for (std::size_t r = 0; r < ds.size(); ++r) {
    double* row = out.features.raw() + r * d;
    for (std::size_t start = 0; start < d; start += factor) {
      double s = 0.0;
      for (std::size_t j = 0; j < factor; ++j) s += row[start + j];
      const double mean = s / static_cast<double>(factor);
      for (std::size_t j = 0; j < factor; ++j) row[start + j] = mean;
    }
  }
  return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> train_test_split(std::size_t n, double test_fraction,
                                                                               std::uint64_t seed) {
  if (n < 2) throw ConfigError(fmt::format("train/test split needs at least 2 samples, got {}", n));
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError(fmt::format("test fraction must lie in (0, 1), got {}", test_fraction));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(n))), 1, n - 1);
  std::vector<std::size_t> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  return {std::move(train), std::move(test)};
}

void write_dataset_csv(std::ostream& out, const Dataset& ds) {
  out << "label";
  for (std::size_t j = 0; j < ds.dim(); ++j) out << ",x" << j;
  out << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.labels[i];
    for (std::size_t j = 0; j < ds.dim(); ++j) out << fmt::format(",{}", ds.features.at(i, j));
    out << '\n';
  }
}

}  // namespace bpfl
