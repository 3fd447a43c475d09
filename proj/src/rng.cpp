#include "fd/rng.hpp"

#include <boost/math/special_functions/erf.hpp>
#include <cmath>

#include "fd/errors.hpp"

namespace fd::rng {

namespace {

constexpr std::uint32_t kW32A = 0x9E3779B9;  // key schedule increments
constexpr std::uint32_t kW32B = 0xBB67AE85;
constexpr std::uint32_t kM4x32A = 0xD2511F53;  // round multipliers
constexpr std::uint32_t kM4x32B = 0xCD9E8D57;

inline void mul_hi_lo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo,
                      std::uint32_t& hi) {
  const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
  lo = static_cast<std::uint32_t>(product);
  hi = static_cast<std::uint32_t>(product >> 32);
}

inline void one_round(std::array<std::uint32_t, 4>& c,
                      const std::array<std::uint32_t, 2>& k) {
  std::uint32_t lo0, hi0, lo1, hi1;
  mul_hi_lo(kM4x32A, c[0], lo0, hi0);
  mul_hi_lo(kM4x32B, c[2], lo1, hi1);
  c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kW32A;
      key[1] += kW32B;
    }
    one_round(counter, key);
  }
  return counter;
}

double u01(const Stream& s, std::uint64_t index) {
  const std::array<std::uint32_t, 4> counter = {
      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
      s.id, 0u};
  const std::array<std::uint32_t, 2> key = {
      static_cast<std::uint32_t>(s.seed), static_cast<std::uint32_t>(s.seed >> 32)};
  const auto r = philox4x32(counter, key);
  const std::uint64_t bits =
      (static_cast<std::uint64_t>(r[0]) << 32) | static_cast<std::uint64_t>(r[1]);
  // 53 high bits plus a half-ulp offset: values lie strictly inside (0,1).
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

double normal(const Stream& s, std::uint64_t index) {
  return norm_quantile(u01(s, index));
}

double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw Error(ErrorCode::BadArgument, "norm_quantile needs p in (0,1)");
  // Phi^{-1}(p) = -sqrt(2) * erfc^{-1}(2p)
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace fd::rng
