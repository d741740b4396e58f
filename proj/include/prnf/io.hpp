#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace prnf::io {

// All binary containers are little-endian on disk regardless of host order.

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& os, double v) {
  put_u64(os, std::bit_cast<std::uint64_t>(v));
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("unexpected end of file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("unexpected end of file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

inline void put_magic(std::ostream& os, const char magic[4]) { os.write(magic, 4); }

inline void expect_magic(std::istream& is, const char magic[4], const char* what) {
  char b[4];
  is.read(b, 4);
  if (!is || std::memcmp(b, magic, 4) != 0) {
    throw std::runtime_error(std::string("bad magic bytes: not a ") + what + " file");
  }
}

inline void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is) {
  const std::uint32_t n = get_u32(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw std::runtime_error("unexpected end of file");
  return s;
}

}  // namespace prnf::io
