#pragma once

#include <cmath>
#include <cstdint>

namespace tnsketch {

// Counter-based pseudo-random stream with random access: the i-th output is a
// pure function of (seed, i), so sketch entries can be generated lazily, in any
// order, and in parallel while staying bit-identical for a given seed.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : seed_(seed) {}

  // splitmix64-style finalizer over a golden-ratio counter walk
  std::uint64_t bits(std::uint64_t i) const {
    std::uint64_t z = seed_ + (i + 1) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // uniform double in [0, 1)
  double uniform(std::uint64_t i) const {
    return static_cast<double>(bits(i) >> 11) * 0x1.0p-53;
  }

  // uniform integer in [0, n); n must be positive
  std::uint64_t below(std::uint64_t i, std::uint64_t n) const {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(bits(i)) * n) >> 64);
  }

  // +1.0 or -1.0 with equal probability
  double sign(std::uint64_t i) const { return (bits(i) & 1) ? 1.0 : -1.0; }

  // standard normal via Box-Muller on counters (2i, 2i+1)
  double normal(std::uint64_t i) const {
    double u1 = uniform(2 * i);
    double u2 = uniform(2 * i + 1);
    if (u1 < 0x1.0p-60) u1 = 0x1.0p-60;
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
};

// Deterministically derives an independent child seed for a tagged substream.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  return RandomStream(seed).bits(0x5EED0000u + tag);
}

}  // namespace tnsketch
