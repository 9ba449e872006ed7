#pragma once

// SplitMix64: the reference generator for every random draw in the toolkit
// (initialization, datasets, shuffling, randomized verification). Its output
// sequence is fully specified, so datasets can be regenerated bit-exactly by
// any implementation of the same algorithm.

#include <cstddef>
#include <cstdint>

namespace taurnn {

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform on the open interval (0, 1): ((x >> 11) + 0.5) * 2^-53.
  double uniform() {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] (inclusive).
  std::size_t uniform_int(std::size_t lo, std::size_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    // Multiply-shift on the top 32 bits; bias is below 2^-32 for the small
    // ranges used here.
    const std::uint64_t r = (next() >> 32) * span;
    return lo + static_cast<std::size_t>(r >> 32);
  }

  /// Independent child stream; same (seed, stream) always yields the same
  /// generator.
  static SplitMix64 stream(std::uint64_t seed, std::uint64_t stream_id) {
    SplitMix64 mix(seed ^ (0xD1B54A32D192ED03ULL * (stream_id + 1)));
    return SplitMix64(mix.next());
  }

 private:
  std::uint64_t state_;
};

}  // namespace taurnn
