#pragma once

#include <cstddef>
#include <cstdint>

namespace gne {

/// SplitMix64: the k-th output is a fixed bijective mix of seed + k * golden gamma,
/// so streams are reproducible bit-for-bit across platforms and languages.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : counter_(seed) {}

  std::uint64_t next() {
    counter_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = counter_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform on the open interval (0, 1).
  double uniform01() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }

  /// Uniform on the open interval (lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Integer in [0, n). Modulo bias is below 2^-40 for the sizes used here.
  std::size_t below(std::size_t n) { return n == 0 ? 0 : static_cast<std::size_t>(next() % n); }

  bool bernoulli(double p) { return uniform01() < p; }

 private:
  std::uint64_t counter_;
};

}  // namespace gne
