#pragma once

#include <array>
#include <cstdint>

namespace fd::rng {

// Philox4x32-10 block cipher (Salmon et al., SC 2011). Counter-based: every
// (counter, key) pair maps to four 32-bit words with no sequential state, so
// draws indexed by (seed, stream, element) are reproducible in any order and
// from any thread.
std::array<uint32_t, 4> philox4x32(std::array<uint32_t, 4> counter,
                                   std::array<uint32_t, 2> key);

// One logical random stream: the 64-bit seed is the cipher key, the stream id
// separates variables (and mediator dimensions) inside one dataset draw.
struct Stream {
  std::uint64_t seed = 0;
  std::uint32_t id = 0;
};

// Uniform on the open interval (0,1); exactly representable, never 0 or 1.
double u01(const Stream& s, std::uint64_t index);

// Standard normal via the inverse CDF applied to u01 (no Box-Muller), keeping
// streams bit-reproducible and order-independent.
double normal(const Stream& s, std::uint64_t index);

// Inverse standard-normal CDF on (0,1).
double norm_quantile(double p);

// Standard normal CDF (for round-trip checks and coverage math).
double norm_cdf(double z);

}  // namespace fd::rng
