#pragma once

#include <cmath>
#include <cstdint>

namespace egofuse {

// All randomness in the project goes through this generator. std::mt19937 with
// std::*_distribution is implementation-defined per libstdc++/libc++ release,
// which would break frozen expected values, so the whole chain is pinned here:
// splitmix64 seeding, xoshiro256++ core, explicit bit-to-double conversion.

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  // Independent child stream for (tag) under this stream's seed.
  Rng fork(uint64_t tag) const {
    uint64_t sm = s_[0] ^ (0x632be59bd9b4e019ull * (tag + 1));
    return Rng(splitmix64(sm));
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  uint64_t uniform_index(uint64_t n) { return next_u64() % n; }

  double normal() {
    // Box-Muller; cache the second value.
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t s_[4];
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Stateless per-item hash, used where items must be decided independently of
// evaluation order (per-ray dropout, per-frame corruption draws).
inline uint64_t mix_hash(uint64_t a, uint64_t b, uint64_t c = 0) {
  uint64_t s = a * 0x9e3779b97f4a7c15ull + b * 0xc2b2ae3d27d4eb4full + c * 0x165667b19e3779f9ull;
  return splitmix64(s);
}

inline double hash_uniform(uint64_t a, uint64_t b, uint64_t c = 0) {
  return static_cast<double>(mix_hash(a, b, c) >> 11) * 0x1.0p-53;
}

}  // namespace egofuse
