//
// Copyright 2026 The moldiff project
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLDIFF_CHECKPOINT_HPP_
#define MOLDIFF_CHECKPOINT_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "moldiff/diffusion.hpp"
#include "moldiff/params.hpp"

namespace moldiff {

inline constexpr uint32_t kCheckpointFormatVersion = 1;

// Everything needed to resume or serve a trained model: the noise-schedule
// recipe, every named parameter tensor (denoiser, feature extractor,
// condition pipeline alike), and where training left off.
struct Checkpoint {
  uint32_t version = kCheckpointFormatVersion;
  int schedule_steps = 0;
  ScheduleKind schedule_kind = ScheduleKind::kUniform;
  std::vector<double> node_marginal;  // empty for the uniform schedule
  std::vector<double> edge_marginal;
  uint64_t training_step = 0;
  uint64_t seed = 0;
  ParamStore params;
};

// Binary file: magic "PDCK", version u32, schedule block, named f64 tensor
// table (name, shape, raw little-endian data), trailing CRC64 over all
// preceding bytes. Round-trips every tensor bit-exactly.
void save_checkpoint(const Checkpoint& ck, const std::string& path);

// Throws an io error if the file cannot be read, a config error on a format
// version this build does not understand, and a data error when the magic,
// structure, or checksum show corruption or truncation.
Checkpoint load_checkpoint(const std::string& path);

// CRC64 (ECMA polynomial) of a byte range; exposed for tests.
uint64_t crc64(const uint8_t* data, size_t len);

}  // namespace moldiff

#endif  // MOLDIFF_CHECKPOINT_HPP_
