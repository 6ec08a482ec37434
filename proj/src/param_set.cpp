// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#include "bpfl/param_set.hpp"

#include <algorithm>
#include <cstring>

#include <fmt/format.h>

#include "bpfl/errors.hpp"

namespace bpfl {

Tensor& ParamSet::add(std::string name, Tensor value, bool trainable) {
  if (find(name) != nullptr) throw StructuralError(fmt::format("duplicate parameter name '{}'", name));
  entries_.push_back(Entry{std::move(name), std::move(value), trainable});
  return entries_.back().value;
}

const ParamSet::Entry* ParamSet::find(std::string_view name) const {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
  return it == entries_.end() ? nullptr : &*it;
}

ParamSet::Entry* ParamSet::find(std::string_view name) {
  return const_cast<Entry*>(std::as_const(*this).find(name));
}

bool ParamSet::contains(std::string_view name) const { return find(name) != nullptr; }

Tensor& ParamSet::at(std::string_view name) {
  auto* e = find(name);
  if (e == nullptr) throw StructuralError(fmt::format("unknown parameter '{}'", name));
  return e->value;
}

const Tensor& ParamSet::at(std::string_view name) const {
  const auto* e = find(name);
  if (e == nullptr) throw StructuralError(fmt::format("unknown parameter '{}'", name));
  return e->value;
}

bool ParamSet::trainable(std::string_view name) const {
  const auto* e = find(name);
  if (e == nullptr) throw StructuralError(fmt::format("unknown parameter '{}'", name));
  return e->trainable;
}

void ParamSet::set_trainable(std::string_view name, bool trainable) {
  auto* e = find(name);
  if (e == nullptr) throw StructuralError(fmt::format("unknown parameter '{}'", name));
  e->trainable = trainable;
}

void ParamSet::set_all_trainable(bool trainable) {
  for (auto& e : entries_) e.trainable = trainable;
}

std::size_t ParamSet::trainable_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (e.trainable) n += e.value.size();
  }
  return n;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

bool aggregation_compatible(const ParamSet& a, const ParamSet& b) {
  if (a.size() != b.size()) return false;
  return std::equal(a.begin(), a.end(), b.begin(), [](const auto& x, const auto& y) {
    return x.name == y.name && x.value.shape() == y.value.shape();
  });
}

bool bit_equal(const ParamSet& a, const ParamSet& b) {
  if (a.size() != b.size()) return false;
  return std::equal(a.begin(), a.end(), b.begin(), [](const auto& x, const auto& y) {
    return x.name == y.name && x.trainable == y.trainable && bit_equal(x.value, y.value);
  });
}

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv_mix(std::uint64_t& h, const void* bytes, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

}  // namespace

std::uint64_t content_hash(const ParamSet& params) {
  std::uint64_t h = kFnvOffset;
  for (const auto& e : params) {
    fnv_mix(h, e.name.data(), e.name.size());
    for (auto extent : e.value.shape()) fnv_mix(h, &extent, sizeof(extent));
    fnv_mix(h, e.value.raw(), e.value.size() * sizeof(double));
  }
  return h;
}

}  // namespace bpfl
