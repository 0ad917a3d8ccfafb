#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace riskspan {

/// Seeded generator with portable derived draws. std::uniform_*_distribution
/// and std::shuffle are implementation-defined, so every draw that feeds an
/// artifact goes through here instead.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, bound), bound > 0. Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return r % bound;
  }

  /// Uniform in the open interval (0, 1).
  double open_unit() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform in the open interval (lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * open_unit(); }

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

private:
  std::mt19937_64 engine_;
};

}  // namespace riskspan
