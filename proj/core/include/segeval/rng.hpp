#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace segeval {

/// Deterministic random source. std::mt19937_64 is fully specified by the
/// standard and the bounded/unit draws below avoid the library-defined
/// distributions, so a seed produces the same stream on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next() { return eng_(); }

  /// Unbiased draw from [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) {
    // rejection sampling on the top of the range
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n + 1) % n;
    std::uint64_t x = eng_();
    while (x > limit) x = eng_();
    return x % n;
  }

  /// Uniform in [0, 1) with 53 random bits.
  double unit() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

  bool bernoulli(double p) { return unit() < p; }

  /// Standard normal via Box-Muller; draws two uniforms per pair.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = unit();
    while (u1 <= 0.0) u1 = unit();
    const double u2 = unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  /// Exponential with rate 1 (median ln 2).
  double exponential() { return -std::log1p(-unit()); }

 private:
  std::mt19937_64 eng_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

/// Stable per-stream seed derivation (splitmix64 finalizer over the pair).
/// hash(master, i) changes completely with either argument, so parallel
/// per-case generators never share state.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace segeval
