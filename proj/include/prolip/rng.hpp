#pragma once

#include <cmath>
#include <cstdint>

namespace prolip {

// Counter-based generator: draw k of stream (seed, stream) is a pure function
// of (seed, stream, k). Substreams can therefore be evaluated in any order
// and still reproduce the serial draws exactly.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix64(mix64(seed + 0x9E3779B97F4A7C15ull) ^
                   mix64(stream + 0xD1B54A32D192ED03ull))) {}

  std::uint64_t next_u64() { return at(counter_++); }

  // Uniform in [0, 1).
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; consumes two words per call.
  double next_normal() {
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  // Uniform integer in [0, n); n > 0. Multiply-shift bound, bias < n / 2^64.
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // SplitMix64 finalizer.
  static std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t at(std::uint64_t counter) const {
    return mix64(key_ + 0x9E3779B97F4A7C15ull * counter);
  }

  static constexpr double kTwoPi = 6.283185307179586476925286766559;

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace prolip
