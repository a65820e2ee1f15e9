#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>

namespace wbtree {

// SplitMix64 finalizer. Used both to derive stream keys and as the stream
// generator itself (counter-based, so any key yields an independent stream).
inline constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view s,
                                       std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Identifies a random stream. Keys form a tree: `derive` produces a child key
/// from a tag and payload, so streams such as (seed, "replica", i) or
/// (seed, "edge", u, v, kind) are reproducible independently of call order.
class StreamKey {
 public:
  constexpr StreamKey() = default;
  explicit constexpr StreamKey(std::uint64_t seed) : value_(mix64(seed)) {}

  [[nodiscard]] constexpr std::uint64_t value() const noexcept { return value_; }

  [[nodiscard]] constexpr StreamKey derive(std::string_view tag) const noexcept {
    return from_raw(mix64(value_ ^ fnv1a64(tag)));
  }
  [[nodiscard]] constexpr StreamKey derive(std::string_view tag,
                                           std::uint64_t payload) const noexcept {
    return derive(tag).absorb(payload);
  }
  [[nodiscard]] constexpr StreamKey absorb(std::uint64_t payload) const noexcept {
    return from_raw(mix64(value_ + 0x632be59bd9b4e019ULL * (payload + 1)));
  }
  [[nodiscard]] StreamKey absorb(std::span<const std::uint8_t> bytes) const noexcept {
    StreamKey k = absorb(static_cast<std::uint64_t>(bytes.size()));
    for (auto b : bytes) k = k.absorb(b);
    return k;
  }

  friend constexpr bool operator==(StreamKey, StreamKey) = default;

 private:
  static constexpr StreamKey from_raw(std::uint64_t v) noexcept {
    StreamKey k;
    k.value_ = v;
    return k;
  }
  std::uint64_t value_ = 0;
};

/// Deterministic random stream; satisfies UniformRandomBitGenerator.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  explicit RandomStream(StreamKey key) noexcept : state_(key.value()) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>((*this)()) * n) >> 64);
  }

  /// Exponential variate with the given rate (> 0).
  double exponential(double rate) noexcept {
    return -std::log1p(-uniform()) / rate;
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

 private:
  std::uint64_t state_;
};

}  // namespace wbtree
