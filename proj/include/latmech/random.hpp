#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace latmech {

/// Named purposes for derived random streams. Every stream is a pure
/// function of (experiment seed, purpose, index), so runs are reproducible
/// and independent of evaluation order.
enum class Stream : std::uint64_t {
  Model = 1,
  Protocol = 2,
  Mechanism = 3,
  Harness = 4,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, Stream purpose, std::uint64_t index = 0) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(purpose));
  return splitmix64(h ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

/// Random stream. Uniform and normal variates are generated here rather than
/// through <random> distributions so the sequence is fixed by the engine alone.
class Rng {
 public:
  using result_type = std::mt19937_64::result_type;

  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}
  Rng(std::uint64_t seed, Stream purpose, std::uint64_t index = 0)
      : engine_(derive_seed(seed, purpose, index)) {}

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform on {0, ..., n-1}.
  std::uint64_t below(std::uint64_t n) {
    // Reject the low 2^64 mod n values so the modulo is unbiased.
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t x = engine_();
      if (x >= threshold) return x % n;
    }
  }

  /// Standard normal via the Marsaglia polar method (second variate discarded).
  double normal() {
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    return u * std::sqrt(-2.0 * std::log(s) / s);
  }

  /// Independent child stream; consumes one draw from this stream.
  Rng split() { return Rng(splitmix64(engine_())); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace latmech
