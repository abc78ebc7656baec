#pragma once

// Counter-based random number generation (Philox 4x32-10).
//
// Every random quantity in the library is addressed by (seed, stream, index)
// instead of being drawn from a stateful engine, so regenerating a scenario
// matrix or a synthetic instance reproduces it bit-exactly regardless of
// evaluation order or thread count.

#include <array>
#include <cmath>
#include <cstdint>

namespace netprice {

namespace detail {

inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t kM0 = 0xD2511F53u;
  constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u;
  constexpr std::uint32_t kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t(kM0) * ctr[0];
    const std::uint64_t p1 = std::uint64_t(kM1) * ctr[2];
    ctr = {std::uint32_t(p1 >> 32) ^ ctr[1] ^ key[0], std::uint32_t(p1 & 0xFFFFFFFFu),
           std::uint32_t(p0 >> 32) ^ ctr[3] ^ key[1], std::uint32_t(p0 & 0xFFFFFFFFu)};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

inline double u64_to_unit_double(std::uint64_t v) {
  // 53 significand bits, strictly inside (0, 1) so log() is safe.
  return (double(v >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace detail

/// Two raw 64-bit words for counter (stream, index) under the given seed.
inline std::array<std::uint64_t, 2> counter_bits(std::uint64_t seed, std::uint64_t stream,
                                                 std::uint64_t index) {
  const auto out = detail::philox4x32(
      {std::uint32_t(index & 0xFFFFFFFFu), std::uint32_t(index >> 32),
       std::uint32_t(stream & 0xFFFFFFFFu), std::uint32_t(stream >> 32)},
      {std::uint32_t(seed & 0xFFFFFFFFu), std::uint32_t(seed >> 32)});
  return {(std::uint64_t(out[0]) << 32) | out[1], (std::uint64_t(out[2]) << 32) | out[3]};
}

/// Uniform draw in (0, 1) addressed by (seed, stream, index).
inline double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return detail::u64_to_unit_double(counter_bits(seed, stream, index)[0]);
}

/// A Box-Muller pair of standard normals addressed by (seed, stream, index).
inline std::array<double, 2> counter_gaussian_pair(std::uint64_t seed, std::uint64_t stream,
                                                   std::uint64_t index) {
  const auto bits = counter_bits(seed, stream, index);
  const double u1 = detail::u64_to_unit_double(bits[0]);
  const double u2 = detail::u64_to_unit_double(bits[1]);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 6.283185307179586476925286766559 * u2;
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

// Fixed stream ids; sub-seeds for distinct purposes are derived from one user
// seed by these offsets so a single --seed reproduces a whole run.
namespace streams {
inline constexpr std::uint64_t kScenario = 0x5343454eull;    // "SCEN"
inline constexpr std::uint64_t kElasticity = 0x454c4153ull;  // "ELAS"
inline constexpr std::uint64_t kGraph = 0x47525048ull;       // "GRPH"
inline constexpr std::uint64_t kCost = 0x434f5354ull;        // "COST"
}  // namespace streams

}  // namespace netprice
