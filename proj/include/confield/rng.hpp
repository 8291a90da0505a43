#pragma once

#include <array>
#include <cstdint>

namespace confield::rng {

// Philox 4x32 with 10 rounds: a counter-based generator. Every 128-bit output
// block is a pure function of (counter, key), so any draw in a simulation can
// be produced on any worker without shared state.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key);

// Standard normal quantile (Wichura's PPND16 rational approximations).
// Relative accuracy is near machine precision over (0, 1).
double normal_quantile(double p);

// One logical stream of iid draws addressed by (seed, stream, index).
//   key     = seed split into two 32-bit words
//   counter = (stream lo, stream hi, index lo, index hi)
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t stream)
      : seed_(seed), stream_(stream) {}

  std::uint64_t bits(std::uint64_t index) const;

  // uniform on (0,1), strictly inside the interval
  double uniform(std::uint64_t index) const {
    return (static_cast<double>(bits(index) >> 11) + 0.5) * 0x1p-53;
  }

  // standard normal via the inverse CDF (keeps one draw = one index)
  double normal(std::uint64_t index) const {
    return normal_quantile(uniform(index));
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
};

}  // namespace confield::rng
