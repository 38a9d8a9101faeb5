#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace maskrank {

// Seeded generator with a platform-independent output sequence.
//
// The raw stream is std::mt19937_64, whose word sequence is fixed by the
// C++ standard. Every derived draw (uniform ints, doubles, gaussians,
// shuffles) is implemented here rather than with <random> distributions,
// because the standard does not pin down distribution algorithms and they
// differ across standard libraries. Draw-for-draw reproducibility across
// platforms follows from that.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Unbiased uniform integer in [0, bound) via rejection sampling.
  std::uint64_t uniform_below(std::uint64_t bound) {
    assert(bound > 0);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % bound;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1p-53; }

  /// Uniform double in the open interval (0, 1).
  double uniform_open01() {
    return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1p-53;
  }

  /// Uniform double in the open interval (lo, hi).
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform_open01();
  }

  /// Standard normal via Box-Muller. Consumes exactly two words per call.
  double gaussian() {
    const double u1 = uniform_open01();
    const double u2 = uniform_open01();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Fisher-Yates shuffle of the first `count` positions, used to draw
  /// `count` items without replacement from `items`. Returns the prefix.
  template <typename T>
  std::vector<T> sample_without_replacement(std::vector<T> items,
                                            std::size_t count) {
    assert(count <= items.size());
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t j = i + uniform_below(items.size() - i);
      std::swap(items[i], items[j]);
    }
    items.resize(count);
    return items;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace maskrank
