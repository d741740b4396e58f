#pragma once

#include <cmath>
#include <cstdint>

namespace prnf {

// Counter-based generator: output i of a stream is a pure function of
// (seed, stream, i), so rows of a dataset can be simulated in any order and
// on any number of workers with identical results.
class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}
  RngStream(std::uint64_t seed, std::uint64_t stream) {
    key_ = mix(seed + 0x9E3779B97F4A7C15ULL * (stream + 1));
    key_ = mix(key_ ^ stream);
    ctr_ = 0;
    has_spare_ = false;
  }

  std::uint64_t next_u64() {
    std::uint64_t z = key_ + 0x9E3779B97F4A7C15ULL * ++ctr_;
    return mix(z);
  }

  // uniform on (0, 1]; never returns 0 so log() is safe
  double uniform01() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  // derive a sub-stream key, e.g. one per dataset row or per tuning candidate
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) {
    return mix(mix(seed ^ 0xA0761D6478BD642FULL) + tag * 0x8BB84B93962EACC9ULL);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t key_;
  std::uint64_t ctr_;
  double spare_ = 0.0;
  bool has_spare_;
};

}  // namespace prnf
