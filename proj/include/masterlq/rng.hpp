#pragma once

#include <array>
#include <cstdint>

namespace masterlq {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
/// Output depends only on (counter, key), so draws can be addressed directly
/// by (stream, particle, step) without any sequential state.
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32(PhiloxCounter counter, PhiloxKey key);

enum class NoiseStream : std::uint32_t {
  kIdiosyncratic = 1,
  kCommon = 2,
  kInitial = 3,
  kPerturbation = 4,
};

/// Two independent standard normals addressed by (seed, stream, a, b, block).
std::array<double, 2> normal_pair(std::uint64_t seed, NoiseStream stream, std::uint32_t a,
                                  std::uint32_t b, std::uint32_t block);

/// Two independent uniforms on [0, 1) with the same addressing.
std::array<double, 2> uniform_pair(std::uint64_t seed, NoiseStream stream, std::uint32_t a,
                                   std::uint32_t b, std::uint32_t block);

/// Fills out[0..n) with standard normals for one (particle, step) address.
void fill_normals(std::uint64_t seed, NoiseStream stream, std::uint32_t a, std::uint32_t b,
                  double* out, int n);

}  // namespace masterlq
