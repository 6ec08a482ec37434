// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "bpfl/tensor.hpp"

namespace bpfl {

/// Named, insertion-ordered collection of tensors with a per-entry
/// trainable flag. Names are unique.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    bool trainable = true;

    friend bool operator==(const Entry&, const Entry&) = default;
  };

  ParamSet() = default;

  /// Appends a new entry; throws StructuralError on a duplicate name.
  Tensor& add(std::string name, Tensor value, bool trainable = true);

  bool contains(std::string_view name) const;
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  bool trainable(std::string_view name) const;
  void set_trainable(std::string_view name, bool trainable);
  void set_all_trainable(bool trainable);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  /// Total scalar count over trainable entries.
  std::size_t trainable_count() const;
  /// Total scalar count over all entries.
  std::size_t scalar_count() const;

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  const Entry* find(std::string_view name) const;
  Entry* find(std::string_view name);

  std::vector<Entry> entries_;
};

/// Same names in the same order with identical per-name shapes.
bool aggregation_compatible(const ParamSet& a, const ParamSet& b);

/// Bitwise equality of names, flags, shapes and values.
bool bit_equal(const ParamSet& a, const ParamSet& b);

/// FNV-1a hash over names, shapes and raw value bits.
std::uint64_t content_hash(const ParamSet& params);

}  // namespace bpfl
