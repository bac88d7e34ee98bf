#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "crowdmap/errors.hpp"

// Little-endian primitives for the DMAP / MSNW binary formats.

namespace crowdmap::binio {

inline void put_u8(std::ostream& os, std::uint8_t v) {
  os.put(static_cast<char>(v));
}

inline void put_u32_le(std::ostream& os, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff),
               static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

inline void put_u64_le(std::ostream& os, std::uint64_t v) {
  put_u32_le(os, static_cast<std::uint32_t>(v & 0xffffffffu));
  put_u32_le(os, static_cast<std::uint32_t>(v >> 32));
}

inline void put_f32_le(std::ostream& os, float v) {
  put_u32_le(os, std::bit_cast<std::uint32_t>(v));
}

inline void put_f64_le(std::ostream& os, double v) {
  put_u64_le(os, std::bit_cast<std::uint64_t>(v));
}

inline std::uint8_t get_u8(std::istream& is, const std::string& what) {
  int c = is.get();
  if (c == EOF) throw IoError("truncated " + what);
  return static_cast<std::uint8_t>(c);
}

inline std::uint32_t get_u32_le(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated " + what);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint64_t get_u64_le(std::istream& is, const std::string& what) {
  std::uint64_t lo = get_u32_le(is, what);
  std::uint64_t hi = get_u32_le(is, what);
  return lo | (hi << 32);
}

inline float get_f32_le(std::istream& is, const std::string& what) {
  return std::bit_cast<float>(get_u32_le(is, what));
}

inline double get_f64_le(std::istream& is, const std::string& what) {
  return std::bit_cast<double>(get_u64_le(is, what));
}

}  // namespace crowdmap::binio
