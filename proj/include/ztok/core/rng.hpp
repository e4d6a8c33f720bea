#pragma once

#include <cmath>
#include <cstdint>

namespace ztok {

// Counter-based deterministic RNG. A draw is a pure function of
// (seed, position), so identical states replay identical streams on any
// platform; no stdlib distribution objects are involved.
struct RngState {
  uint64_t seed = 0;
  uint64_t pos = 0;

  explicit RngState(uint64_t s = 0, uint64_t p = 0) : seed(s), pos(p) {}

  static uint64_t mix(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

  uint64_t next_u64() { return mix(seed + 0x9E3779B97F4A7C15ULL * ++pos); }

  // Strictly inside (0, 1): (k + 0.5) / 2^53 for k in [0, 2^53).
  double next_uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  }

  // -log(-log(u)), with u clamped away from {0,1} by 1e-12.
  double next_gumbel() {
    double u = next_uniform();
    if (u < 1e-12) u = 1e-12;
    if (u > 1.0 - 1e-12) u = 1.0 - 1e-12;
    return -std::log(-std::log(u));
  }

  // Box-Muller; consumes two uniforms per draw.
  double next_normal() {
    double u1 = next_uniform();
    double u2 = next_uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Uniform integer in [0, n).
  uint64_t next_below(uint64_t n) { return next_u64() % n; }

  // Derive an independent stream keyed by (a, b); used for per-step and
  // per-document substreams so threading cannot reorder draws.
  RngState fork(uint64_t a, uint64_t b = 0) const {
    uint64_t s = mix(seed ^ mix(a + 0x1234567));
    s = mix(s ^ mix(b + 0x9876543));
    return RngState(s, 0);
  }
};

}  // namespace ztok
