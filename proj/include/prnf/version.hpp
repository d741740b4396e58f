#pragma once

#include <cstdint>
#include <string>

namespace prnf {

inline constexpr const char* kVersion = "0.1.0";

// FNV-1a; used to stamp output files with a hash of the config that made them
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::string hex_u64(std::uint64_t v);

}  // namespace prnf
