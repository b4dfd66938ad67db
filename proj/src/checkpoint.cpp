//
// Copyright 2026 The moldiff project
// SPDX-License-Identifier: Apache-2.0
//

#include "moldiff/checkpoint.hpp"

#include <array>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "binio.hpp"
#include "moldiff/errors.hpp"

namespace moldiff {

namespace {

constexpr char kMagic[4] = {'P', 'D', 'C', 'K'};
constexpr uint64_t kCrcPoly = 0x42F0E1EBA9EA3693ULL;  // ECMA-182

std::vector<double> read_f64_vec(binio::Reader& r, uint64_t count) {
  // Bound the element count by the bytes actually present before allocating.
  if (count > (r.len - r.pos) / 8) throw data_error("checkpoint: truncated file");
  std::vector<double> v(static_cast<size_t>(count));
  for (size_t i = 0; i < v.size(); ++i) v[i] = r.f64();
  return v;
}

}  // namespace

uint64_t crc64(const uint8_t* data, size_t len) {
  static const std::array<uint64_t, 256> table = [] {
    std::array<uint64_t, 256> t{};
    for (int i = 0; i < 256; ++i) {
      uint64_t crc = static_cast<uint64_t>(i) << 56;
      for (int b = 0; b < 8; ++b) {
        crc = (crc & 0x8000000000000000ULL) ? (crc << 1) ^ kCrcPoly : crc << 1;
      }
      t[static_cast<size_t>(i)] = crc;
    }
    return t;
  }();
  uint64_t crc = 0;
  for (size_t i = 0; i < len; ++i) {
    crc = table[((crc >> 56) ^ data[i]) & 0xFF] ^ (crc << 8);
  }
  return crc;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  if (ck.schedule_steps < 0) throw config_error("checkpoint: negative schedule steps");
  std::vector<uint8_t> buf;
  buf.insert(buf.end(), kMagic, kMagic + 4);
  binio::put_u32(buf, ck.version);
  binio::put_u32(buf, static_cast<uint32_t>(ck.schedule_kind));
  binio::put_u32(buf, static_cast<uint32_t>(ck.schedule_steps));
  binio::put_u64(buf, ck.training_step);
  binio::put_u64(buf, ck.seed);
  binio::put_u32(buf, static_cast<uint32_t>(ck.node_marginal.size()));
  for (double v : ck.node_marginal) binio::put_f64(buf, v);
  binio::put_u32(buf, static_cast<uint32_t>(ck.edge_marginal.size()));
  for (double v : ck.edge_marginal) binio::put_f64(buf, v);
  const auto& params = ck.params.all();
  binio::put_u32(buf, static_cast<uint32_t>(params.size()));
  for (const auto& p : params) {
    binio::put_u32(buf, static_cast<uint32_t>(p.name.size()));
    buf.insert(buf.end(), p.name.begin(), p.name.end());
    binio::put_u32(buf, static_cast<uint32_t>(p.rows));
    binio::put_u32(buf, static_cast<uint32_t>(p.cols));
    for (double v : p.value) binio::put_f64(buf, v);
  }
  binio::put_u64(buf, crc64(buf.data(), buf.size()));
  binio::write_binary_file(path, buf, "checkpoint");
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::vector<uint8_t> buf = binio::read_binary_file(path, "checkpoint");

  // Header first: a future-version file should report its version rather than
  // a checksum failure, so the version check precedes the CRC.
  if (buf.size() < 4 + 4 + 8) throw data_error("checkpoint: truncated file");
  if (std::memcmp(buf.data(), kMagic, 4) != 0) throw data_error("checkpoint: bad magic");
  binio::Reader r{buf.data(), buf.size() - 8, 4, "checkpoint"};
  const uint32_t version = r.u32();
  if (version != kCheckpointFormatVersion) {
    throw config_error("checkpoint: format version " + std::to_string(version) +
                       " not supported (expected " + std::to_string(kCheckpointFormatVersion) +
                       ")");
  }
  if (crc64(buf.data(), buf.size() - 8) != binio::trailing_u64(buf)) {
    throw data_error("checkpoint: checksum mismatch, file corrupt");
  }

  Checkpoint ck;
  ck.version = version;
  const uint32_t kind = r.u32();
  if (kind > 1) throw data_error("checkpoint: unknown schedule kind");
  ck.schedule_kind = static_cast<ScheduleKind>(kind);
  ck.schedule_steps = static_cast<int>(r.u32());
  ck.training_step = r.u64();
  ck.seed = r.u64();
  ck.node_marginal = read_f64_vec(r, r.u32());
  ck.edge_marginal = read_f64_vec(r, r.u32());
  const uint32_t count = r.u32();
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = r.u32();
    std::string name = r.str(name_len);
    const uint64_t rows = r.u32();
    const uint64_t cols = r.u32();
    if (name.empty() || ck.params.contains(name)) {
      throw data_error("checkpoint: bad tensor name, file corrupt");
    }
    std::vector<double> value = read_f64_vec(r, rows * cols);
    ck.params.add(name, static_cast<long>(rows), static_cast<long>(cols),
                  [&value](std::vector<double>& dst) { dst = std::move(value); });
  }
  if (r.pos != r.len) throw data_error("checkpoint: trailing bytes, file corrupt");
  return ck;
}

}  // namespace moldiff
