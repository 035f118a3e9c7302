#pragma once

#include <cstdint>

namespace evtmem {

// Splittable counter-seeded generator: every stream is derived from a
// (seed, replication, cluster) triple, so parallel workers never share state
// and any single cell of a simulation can be reproduced in isolation.
//
// Stream derivation uses SplitMix64 mixing; the generator itself is
// xoshiro256++ (Blackman & Vigna), which is small, fast and passes the
// usual statistical batteries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) { seed_state(seed); }

  // Derived stream. The mixing rounds decorrelate nearby triples.
  Rng(std::uint64_t seed, std::uint64_t replication, std::uint64_t cluster) {
    std::uint64_t x = mix(seed ^ 0x9e3779b97f4a7c15ULL);
    x = mix(x + replication);
    x = mix(x + 0xbf58476d1ce4e5b9ULL * (cluster + 1));
    seed_state(x);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform on the open interval (0, 1); never returns an exact endpoint,
  // so quantile transforms stay finite.
  double uniform_open() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Uniform on (lo, hi).
  double uniform_open(double lo, double hi) {
    return lo + (hi - lo) * uniform_open();
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  void seed_state(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& s : s_) {
      x += 0x9e3779b97f4a7c15ULL;
      s = mix(x);
    }
  }

  std::uint64_t s_[4]{};
};

}  // namespace evtmem
