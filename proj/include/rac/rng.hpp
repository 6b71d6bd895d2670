#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace rac {

namespace detail {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Counter-based SplitMix64 generator. Every draw is mix64 of a counter that
/// advances by the 64-bit golden ratio, so the sequence is a pure function of
/// the seed and is identical on every platform. Independent streams are
/// derived by hashing a stream tag into the seed.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  /// Independent stream for (seed, tag). Does not perturb this generator.
  static SplitMix64 stream(std::uint64_t seed, std::uint64_t tag) {
    return SplitMix64(detail::mix64(detail::mix64(seed + detail::kGolden) ^
                                    detail::mix64(tag + 1)));
  }

  /// Child stream derived from this generator's seed and a tag.
  SplitMix64 split(std::uint64_t tag) const { return stream(state_, tag); }

  std::uint64_t next() {
    state_ += detail::kGolden;
    return detail::mix64(state_);
  }

  /// Uniform in [0, 1).
  double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t lim = n * ((~std::uint64_t{0}) / n);
    std::uint64_t r;
    do {
      r = next();
    } while (r >= lim);
    return r % n;
  }

  /// Standard normal via Box-Muller; two draws per call, no cached spare.
  double gaussian() {
    const double u1 = static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  /// In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace rac
