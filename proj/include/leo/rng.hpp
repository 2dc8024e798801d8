#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace leo {

/// mt19937 with portable bounded draws (std distributions are
/// implementation-defined, which would break cross-platform determinism).
class Rng {
 public:
  Rng() : eng_(0) {}
  explicit Rng(uint64_t seed) : eng_((uint32_t)(seed ^ (seed >> 32) ^ 0x9e3779b9u)) {}

  uint32_t next_u32() { return eng_(); }

  /// Uniform in [0, 1) with 24 bits of resolution.
  double uniform01() { return (next_u32() >> 8) * (1.0 / 16777216.0); }

  /// Uniform integer in [lo, hi], inclusive; rejection sampling.
  int uniform_int(int lo, int hi) {
    if (hi <= lo) return lo;
    uint32_t range = (uint32_t)(hi - lo) + 1u;
    uint32_t limit = UINT32_MAX - UINT32_MAX % range;
    uint32_t v;
    do {
      v = next_u32();
    } while (v >= limit);
    return lo + (int)(v % range);
  }

  double normal() {
    // Box-Muller; cached second value for determinism-friendly pairing.
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 1e-12) u1 = uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  std::string serialize() const {
    std::ostringstream os;
    os << eng_ << " " << (has_spare_ ? 1 : 0) << " " << spare_;
    return os.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> eng_;
    int hs = 0;
    is >> hs >> spare_;
    has_spare_ = hs != 0;
  }

  bool operator==(const Rng& o) const {
    return serialize() == o.serialize();
  }

 private:
  std::mt19937 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Stable 64-bit mix for derived seeds and invariant tie-break keys.
inline uint64_t mix64(uint64_t x) {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ULL;
  x ^= x >> 33;
  return x;
}

inline uint64_t derive_seed(uint64_t base, uint64_t stream, uint64_t index = 0) {
  return mix64(base * 0x9e3779b97f4a7c15ULL + mix64(stream) + index * 0xbf58476d1ce4e5b9ULL);
}

}  // namespace leo
