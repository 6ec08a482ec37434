// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#include "bpfl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>
#include <zlib.h>

#include "bpfl/errors.hpp"

namespace bpfl {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'B', 'P', 'F', 'L'};
// Bounds on decoded sizes so a corrupt header cannot request huge buffers.
constexpr std::uint32_t kMaxRank = 8;
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1U << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos), chunk);
    pos += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

class Writer {
 public:
  template <typename T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void put_string(std::string_view s) {
    put(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  void put_raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string(const char* what) {
    const auto n = get<std::uint32_t>(what);
    need(n, what);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  void get_raw(void* p, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (remaining() < n) throw IntegrityError(fmt::format("checkpoint truncated while reading {}", what));
  }

  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

const ParamSet& Checkpoint::get(std::string_view name) const {
  for (const auto& [n, set] : sets) {
    if (n == name) return set;
  }
  throw IntegrityError(fmt::format("checkpoint has no parameter set '{}'", name));
}

bool bit_equal(const Checkpoint& a, const Checkpoint& b) {
  if (a.config_hash != b.config_hash || a.round != b.round || a.sets.size() != b.sets.size()) return false;
  for (std::size_t i = 0; i < a.sets.size(); ++i) {
    if (a.sets[i].first != b.sets[i].first || !bit_equal(a.sets[i].second, b.sets[i].second)) return false;
  }
  return true;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.put_raw(kMagic, sizeof(kMagic));
  w.put(kCheckpointVersion);
  w.put(ckpt.config_hash);
  w.put(ckpt.round);
  w.put(static_cast<std::uint32_t>(ckpt.sets.size()));
  for (const auto& [name, set] : ckpt.sets) {
    w.put_string(name);
    w.put(static_cast<std::uint32_t>(set.size()));
    for (const auto& e : set) {
      w.put_string(e.name);
      w.put(static_cast<std::uint8_t>(e.trainable ? 1 : 0));
      w.put(static_cast<std::uint32_t>(e.value.shape().size()));
      for (auto ext : e.value.shape()) w.put(static_cast<std::uint64_t>(ext));
      w.put_raw(e.value.data().data(), e.value.size() * sizeof(double));
    }
  }
  const auto crc = crc32_of(w.bytes());
  w.put(crc);
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < sizeof(kMagic) + sizeof(std::uint32_t)) throw IntegrityError("checkpoint truncated");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) throw IntegrityError("not a checkpoint (bad magic)");
  const auto body = bytes.substr(0, bytes.size() - sizeof(std::uint32_t));
  std::uint32_t stored = 0;
  std::memcpy(&stored, bytes.data() + body.size(), sizeof(stored));
  if (crc32_of(body) != stored) {
    throw IntegrityError(fmt::format("checkpoint checksum mismatch (stored {:08x}, computed {:08x})", stored,
                                     crc32_of(body)));
  }

  Reader r(body.substr(sizeof(kMagic)));
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) throw IntegrityError(fmt::format("unsupported checkpoint version {}", version));
  Checkpoint ckpt;
  ckpt.config_hash = r.get<std::uint64_t>("config hash");
  ckpt.round = r.get<std::uint64_t>("round");
  const auto set_count = r.get<std::uint32_t>("set count");
  for (std::uint32_t s = 0; s < set_count; ++s) {
    auto name = r.get_string("set name");
    ParamSet set;
    const auto entries = r.get<std::uint32_t>("entry count");
    for (std::uint32_t k = 0; k < entries; ++k) {
      auto entry_name = r.get_string("entry name");
      const auto flag = r.get<std::uint8_t>("trainable flag");
      if (flag > 1) throw IntegrityError(fmt::format("bad trainable flag on '{}'", entry_name));
      const auto rank = r.get<std::uint32_t>("rank");
      if (rank == 0 || rank > kMaxRank) throw IntegrityError(fmt::format("bad rank {} on '{}'", rank, entry_name));
      Shape shape;
      std::uint64_t count = 1;
      for (std::uint32_t d = 0; d < rank; ++d) {
        const auto ext = r.get<std::uint64_t>("extent");
        if (ext == 0 || ext > kMaxElements || count * ext > kMaxElements) {
          throw IntegrityError(fmt::format("bad extent on '{}'", entry_name));
        }
        count *= ext;
        shape.push_back(static_cast<std::size_t>(ext));
      }
      std::vector<double> data(count);
      r.get_raw(data.data(), count * sizeof(double), "tensor data");
      try {
        set.add(std::move(entry_name), Tensor(std::move(shape), std::move(data)), flag == 1);
      } catch (const StructuralError& e) {
        throw IntegrityError(fmt::format("malformed set '{}': {}", name, e.what()));
      }
    }
    ckpt.sets.emplace_back(std::move(name), std::move(set));
  }
  if (r.remaining() != 0) throw IntegrityError(fmt::format("{} unexpected trailing bytes", r.remaining()));
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot open {} for writing", tmp.string()));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(fmt::format("write to {} failed", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open checkpoint {}", path.string()));
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const IntegrityError& e) {
    throw IntegrityError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

}  // namespace bpfl
