#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace gpshield {

/// Counter-based pseudo random stream.
///
/// The state is a (key, counter) pair and every draw runs a SplitMix64-style
/// finalizer over key + counter * gamma.  Substreams derive a fresh key from
/// the parent key and caller-chosen ids, so each component of a run can own an
/// independent stream whose output does not depend on how many draws happened
/// elsewhere.  Identical seed and identical call sequence reproduce the same
/// values on every platform.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : key_(finalize(seed + kGamma)) {}

  /// Child stream keyed by one id.  Distinct ids give streams that are
  /// statistically independent of each other and of the parent.
  RngStream substream(std::uint64_t id) const {
    return RngStream(finalize(key_ ^ finalize(id + kGamma)), 0);
  }

  /// Child stream keyed by a path of ids, e.g. {episode, step, purpose}.
  /// The path is order sensitive.
  RngStream substream(std::initializer_list<std::uint64_t> ids) const {
    std::uint64_t k = key_;
    for (std::uint64_t id : ids) k = finalize(k ^ finalize(id + kGamma));
    return RngStream(k, 0);
  }

  std::uint64_t next_u64() { return finalize(key_ + (++counter_) * kGamma); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal deviate (Box-Muller, one spare cached between calls).
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// Uniform integer in [0, n).  Rejection sampling, no modulo bias.
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  /// Random sign, +1 or -1.
  double sign() { return (next_u64() & 1u) ? 1.0 : -1.0; }

 private:
  RngStream(std::uint64_t key, std::uint64_t counter)
      : key_(key), counter_(counter) {}

  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

  static std::uint64_t finalize(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace gpshield
