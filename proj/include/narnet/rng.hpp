#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace narnet {

/// SplitMix64 run as a counter-based generator: the n-th output is a pure
/// function of (key, n). Independent streams are obtained by hashing a path of
/// identifiers into the key, so replicate r of a study draws the same numbers
/// no matter which thread runs it or in which order.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t seed = 0) : key_(mix(seed ^ 0x6a09e667f3bcc909ULL)) {}

  /// Child stream keyed by (seed, ids...).
  static CounterRng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
    CounterRng rng(seed);
    for (auto id : ids) rng.key_ = mix(rng.key_ ^ mix(id + 0x3c6ef372fe94f82bULL));
    return rng;
  }

  CounterRng substream(std::uint64_t id) const {
    CounterRng rng = *this;
    rng.key_ = mix(key_ ^ mix(id + 0x3c6ef372fe94f82bULL));
    rng.counter_ = 0;
    return rng;
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix(key_ + (counter_++) * kGolden); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  std::uint64_t counter() const { return counter_; }

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

  static std::uint64_t mix(std::uint64_t z) {
    z += kGolden;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace narnet
