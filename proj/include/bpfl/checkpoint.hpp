// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bpfl/param_set.hpp"

namespace bpfl {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Named ParamSets plus the hash of the config that produced them.
///
/// Binary layout, all integers little-endian:
///   "BPFL" | u32 version | u64 config_hash | u64 round | u32 set_count
///   per set:   u32 name_len | name | u32 entry_count
///   per entry: u32 name_len | name | u8 trainable | u32 rank | u64 extents[rank] | f64 data[]
///   u32 CRC32 of every preceding byte
struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::uint64_t round = 0;
  std::vector<std::pair<std::string, ParamSet>> sets;

  /// Throws IntegrityError if no set has this name.
  const ParamSet& get(std::string_view name) const;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Bit-exact equality including NaN payloads and signed zeros.
bool bit_equal(const Checkpoint& a, const Checkpoint& b);

std::string encode_checkpoint(const Checkpoint& ckpt);

/// Throws IntegrityError on a bad magic, unknown version, truncation,
/// trailing garbage or checksum mismatch.
Checkpoint decode_checkpoint(std::string_view bytes);

/// Writes through a temporary file and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace bpfl
