#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace ragar {

/// Splittable counter-based PRNG (splitmix64 core).
///
/// Every stochastic component takes one of these by value; there is no
/// global RNG state anywhere in the library. Substreams are derived with
/// split(), which decorrelates via the splitmix finalizer, so the draw
/// order of one component never shifts another component's stream.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(mix(seed ^ kGamma)) {}

  uint64_t next_u64() {
    state_ += kGamma;
    return mix(state_);
  }

  /// Uniform double in [0, 1). Uses the top 53 bits, so results are exact
  /// dyadic rationals and identical on every IEEE-754 platform.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform in [-1, 1), same dyadic-exactness guarantee as uniform().
  double uniform_signed() { return 2.0 * uniform() - 1.0; }

  /// Standard normal via Box-Muller. Draws exactly two uniforms per call.
  double normal() {
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Uniform integer in [0, n). n must be positive.
  int uniform_int(int n) {
    // Rejection-free modulo is fine here: n is tiny relative to 2^64.
    return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
  }

  /// Independent substream keyed by an integer. Does not advance this stream.
  Rng split(uint64_t stream) const {
    return Rng(mix(state_ ^ mix(stream + 0x6A09E667F3BCC909ULL)));
  }

  /// Independent substream keyed by a tag string (FNV-1a hashed).
  Rng split(std::string_view tag) const { return split(fnv1a(tag)); }

  static uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001B3ULL;
    }
    return h;
  }

 private:
  static constexpr uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  uint64_t state_;
};

}  // namespace ragar
