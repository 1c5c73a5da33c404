#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace divgrpo {

// Seed mixing for independent per-trajectory streams.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b) { return splitmix64(splitmix64(a) ^ (b + 0x9e3779b97f4a7c15ull)); }

inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) { return mix_seed(mix_seed(a, b), c); }

// mt19937_64 with explicit double/categorical draws. std::*_distribution is
// implementation-defined, so draws are constructed from raw engine output to
// keep seeded runs reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double next_double() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Inverse-CDF draw from an unnormalized nonnegative weight vector.
  int categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    const double r = next_double() * total;
    double cum = 0.0;
    for (size_t i = 0; i < weights.size(); ++i) {
      cum += weights[i];
      if (r < cum) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;
  }

  // Uniform integer in [0, n).
  int below(int n) { return static_cast<int>(next_double() * n); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace divgrpo
