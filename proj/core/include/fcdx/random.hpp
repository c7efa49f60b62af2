#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace fcdx {

// Counter-based random stream. Draw i is a pure function of (key, i), so a
// stream can be split by name or index and replayed positionally; two passes
// over the same keys yield the same bytes regardless of interleaving.
// Core mixer is splitmix64.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : key_(mix(seed ^ 0x9e3779b97f4a7c15ull)) {}

  RandomStream child(std::string_view name) const {
    return RandomStream(mix(key_ ^ fnv1a(name)), 0);
  }
  RandomStream child(std::uint64_t index) const {
    return RandomStream(mix(key_ + 0xbf58476d1ce4e5b9ull * (index + 1)), 0);
  }

  std::uint64_t next_u64() { return mix(key_ + 0x9e3779b97f4a7c15ull * ++counter_); }

  // [0, 1) with 53 random bits
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  float uniform_f() { return static_cast<float>(uniform()); }

  // Standard normal via Box-Muller; consumes two draws, discards the twin.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    return r * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Uniform integer in [0, n), n >= 1. Multiply-shift map; bias < 2^-32.
  std::uint32_t uniform_int(std::uint32_t n) {
    return static_cast<std::uint32_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

 private:
  RandomStream(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
    return h;
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace fcdx
