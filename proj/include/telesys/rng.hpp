#pragma once

// Reproducible random streams.
//
// Every stream is a std::mt19937_64 (bit-exact across standard libraries)
// seeded with splitmix64(seed ^ splitmix64(stream_id)). Uniforms take the top
// 53 bits; normals use the Box-Muller transform on two uniforms. The standard
// library distributions are deliberately not used because their output is
// implementation-defined.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace telesys::rng {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of substream `stream_id` under `seed`.
inline constexpr std::uint64_t derive(std::uint64_t seed, std::uint64_t stream_id) {
  return splitmix64(seed ^ splitmix64(stream_id));
}

/// Named substreams used by the channel simulator.
enum class Stream : std::uint64_t { kJitter = 1, kLoss = 2, kDelayRange = 3 };

class Generator {
 public:
  explicit Generator(std::uint64_t seed) : engine_(seed) {}
  Generator(std::uint64_t seed, Stream stream)
      : engine_(derive(seed, static_cast<std::uint64_t>(stream))) {}

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Standard normal. Consumes exactly two uniforms per call.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t bits() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace telesys::rng
