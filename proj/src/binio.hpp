//
// Copyright 2026 The moldiff project
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLDIFF_SRC_BINIO_HPP_
#define MOLDIFF_SRC_BINIO_HPP_

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "moldiff/errors.hpp"

// Little-endian byte packing shared by the binary file formats. Internal to
// the library; the public per-format contracts live in the module headers.
namespace moldiff::binio {

inline void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  for (int i = 0; i < 2; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

inline void put_f64(std::vector<uint8_t>& out, double v) {
  put_u64(out, std::bit_cast<uint64_t>(v));
}

// Cursor with bounds checks; any overrun means the file was cut short.
// `what` prefixes error messages so each format reports under its own name.
struct Reader {
  const uint8_t* data;
  size_t len;
  size_t pos;
  const char* what;

  void need(size_t n) const {
    if (n > len - pos) throw data_error(std::string(what) + ": truncated file");
  }
  uint16_t u16() {
    need(2);
    uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v = static_cast<uint16_t>(v | data[pos + i] << (8 * i));
    pos += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data + pos), n);
    pos += n;
    return s;
  }
};

inline std::vector<uint8_t> read_binary_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw io_error(std::string(what) + ": cannot open: " + path);
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<uint8_t> buf(static_cast<size_t>(size));
  if (size > 0) in.read(reinterpret_cast<char*>(buf.data()), size);
  if (!in) throw io_error(std::string(what) + ": read failed: " + path);
  return buf;
}

inline void write_binary_file(const std::string& path, const std::vector<uint8_t>& buf,
                              const char* what) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error(std::string(what) + ": cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw io_error(std::string(what) + ": write failed: " + path);
}

inline uint64_t trailing_u64(const std::vector<uint8_t>& buf) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<uint64_t>(buf[buf.size() - 8 + static_cast<size_t>(i)]) << (8 * i);
  }
  return v;
}

}  // namespace moldiff::binio

#endif  // MOLDIFF_SRC_BINIO_HPP_
