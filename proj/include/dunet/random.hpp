#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace dunet {

/// Seeded 64-bit Mersenne Twister with distribution code written out here, so
/// streams do not depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Seeds from several words, e.g. (run seed, step index, stream tag).
  explicit Rng(std::initializer_list<std::uint64_t> words) {
    std::vector<std::uint32_t> parts;
    for (std::uint64_t w : words) {
      parts.push_back(static_cast<std::uint32_t>(w));
      parts.push_back(static_cast<std::uint32_t>(w >> 32));
    }
    std::seed_seq seq(parts.begin(), parts.end());
    engine_.seed(seq);
  }

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on [lo, hi].
  double uniform(double lo, double hi) {
    const double u = static_cast<double>(engine_() >> 11) * (1.0 / 9007199254740991.0);
    return lo + (hi - lo) * u;
  }

  /// Uniform integer on [0, n) by rejection, n >= 1.
  std::uint64_t index(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do r = engine_();
    while (r >= limit);
    return r % n;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dunet
