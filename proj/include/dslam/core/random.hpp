#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace dslam {

// FNV-1a, used to derive independent RNG streams from a base seed and a tag.
inline uint64_t fnv1a(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Deterministic RNG with hand-rolled transforms so results do not depend on
// the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed == 0 ? 0x9e3779b97f4a7c15ull : seed) {}

  uint64_t next_u64() {
    // splitmix64
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // integer in [0, n)
  int uniform_int(int n) { return n <= 1 ? 0 : int(next_u64() % uint64_t(n)); }

  // standard normal via Box-Muller (no caching, sequence-deterministic)
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double std) { return mean + std * normal(); }

  // Independent child stream identified by a tag.
  Rng split(std::string_view tag) const {
    uint64_t h = fnv1a(tag);
    return Rng(state_ ^ (h | 1));
  }

  Rng split(uint64_t salt) const {
    uint64_t z = (salt + 0x632be59bd9b4e019ull) * 0x9fb21c651e98df25ull;
    return Rng(state_ ^ (z | 1));
  }

 private:
  uint64_t state_;
};

}  // namespace dslam
