// Deterministic, stream-addressable random numbers.
//
// Every random draw in the library comes from an Rng. An Rng is a
// counter-based SplitMix64 stream identified by a 64-bit key: the n-th
// output is mix(key + (n + 1) * golden). Child streams are derived by
// hashing a label (or an integer index) into the key, so environment
// noise, agent sampling and MCMC proposals never share a sequence and can
// be reproduced independently of each other.
//
// Distributions are Boost.Random implementations, which are the same on
// every platform (unlike the algorithms behind std::normal_distribution).
#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

#include <boost/random/beta_distribution.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>

namespace mtss {

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// FNV-1a; stable across compilers unlike std::hash.
constexpr std::uint64_t hash_label(std::string_view label) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace detail

class Rng {
 public:
  using result_type = std::uint64_t;

  Rng() = default;
  explicit constexpr Rng(std::uint64_t key) noexcept : key_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  constexpr result_type operator()() noexcept {
    ++counter_;
    return detail::mix64(key_ + counter_ * detail::kGolden);
  }

  /// Independent child stream named by a label.
  [[nodiscard]] constexpr Rng stream(std::string_view label) const noexcept {
    return Rng(detail::mix64(key_ ^ detail::mix64(detail::hash_label(label))));
  }

  /// Independent child stream addressed by an integer (round, item id, ...).
  [[nodiscard]] constexpr Rng stream(std::uint64_t index) const noexcept {
    return Rng(detail::mix64(key_ + detail::mix64(index ^ 0xD1B54A32D192ED03ULL)));
  }

  [[nodiscard]] constexpr std::uint64_t key() const noexcept { return key_; }
  [[nodiscard]] constexpr std::uint64_t draws() const noexcept { return counter_; }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  /// Uniform on (0, 1).
  double uniform_open() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Uniform integer in [0, n). Lemire's nearly-divisionless method.
  std::uint64_t below(std::uint64_t n) noexcept {
    if (n == 0) return 0;
    __uint128_t m = static_cast<__uint128_t>((*this)()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<__uint128_t>((*this)()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  double normal(double mean = 0.0, double sd = 1.0) {
    boost::random::normal_distribution<double> dist(mean, sd);
    return dist(*this);
  }

  double gamma(double shape, double scale = 1.0) {
    boost::random::gamma_distribution<double> dist(shape, scale);
    return dist(*this);
  }

  double beta(double a, double b) {
    boost::random::beta_distribution<double> dist(a, b);
    return dist(*this);
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

/// Root stream for a (seed, label) pair. Identical pairs give identical
/// sequences on every run and platform.
[[nodiscard]] constexpr Rng seeded_rng(std::uint64_t seed, std::string_view label) noexcept {
  return Rng(detail::mix64(seed * detail::kGolden + 0x5851F42D4C957F2DULL)).stream(label);
}

}  // namespace mtss
