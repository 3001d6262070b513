#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace pfp {

// Deterministic RNG used everywhere randomness is needed. Draws are
// hand-rolled on top of mt19937_64 so results do not depend on the
// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform01() { return (next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) {
    // Rejection sampling to avoid modulo bias.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  bool coin() { return (next_u64() & 1u) != 0; }

  // Index drawn from non-negative weights by CDF inversion. Weights need
  // not be normalized; if all weights are zero the last index is returned.
  int categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform01() * total;
    double acc = 0.0;
    for (std::size_t j = 0; j + 1 < weights.size(); ++j) {
      acc += weights[j];
      if (u < acc) return static_cast<int>(j);
    }
    return static_cast<int>(weights.size()) - 1;
  }

  // Fisher-Yates; stable across platforms, unlike std::shuffle.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // Independent seed for a sub-stream (splitmix64 finalizer).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace pfp
