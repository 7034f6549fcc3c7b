#include "masterlq/rng.hpp"

#include <cmath>
#include <numbers>

namespace masterlq {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo, std::uint32_t& hi) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  lo = static_cast<std::uint32_t>(p);
  hi = static_cast<std::uint32_t>(p >> 32);
}

// 64 random bits -> double in [0, 1) with 53 bits of resolution.
inline double to_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

PhiloxCounter draw(std::uint64_t seed, NoiseStream stream, std::uint32_t a, std::uint32_t b,
                   std::uint32_t block) {
  const PhiloxKey key{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return philox4x32({a, b, static_cast<std::uint32_t>(stream), block}, key);
}

}  // namespace

PhiloxCounter philox4x32(PhiloxCounter c, PhiloxKey k) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t lo0, hi0, lo1, hi1;
    mulhilo(kMul0, c[0], lo0, hi0);
    mulhilo(kMul1, c[2], lo1, hi1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += kWeyl0;
    k[1] += kWeyl1;
  }
  return c;
}

std::array<double, 2> uniform_pair(std::uint64_t seed, NoiseStream stream, std::uint32_t a,
                                   std::uint32_t b, std::uint32_t block) {
  const auto r = draw(seed, stream, a, b, block);
  return {to_unit(r[0], r[1]), to_unit(r[2], r[3])};
}

std::array<double, 2> normal_pair(std::uint64_t seed, NoiseStream stream, std::uint32_t a,
                                  std::uint32_t b, std::uint32_t block) {
  const auto u = uniform_pair(seed, stream, a, b, block);
  // Box-Muller; 1 - u lies in (0, 1] so the log is finite.
  const double radius = std::sqrt(-2.0 * std::log(1.0 - u[0]));
  const double angle = 2.0 * std::numbers::pi * u[1];
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

void fill_normals(std::uint64_t seed, NoiseStream stream, std::uint32_t a, std::uint32_t b,
                  double* out, int n) {
  for (int i = 0, block = 0; i < n; i += 2, ++block) {
    const auto z = normal_pair(seed, stream, a, b, static_cast<std::uint32_t>(block));
    out[i] = z[0];
    if (i + 1 < n) out[i + 1] = z[1];
  }
}

}  // namespace masterlq
