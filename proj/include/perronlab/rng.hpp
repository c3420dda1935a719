#pragma once

#include <array>
#include <cstdint>

namespace perronlab {

/// Philox4x32-10 block cipher. Stateless: the output is a pure function of
/// (key, counter), so any stream position can be generated directly.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key);

std::uint64_t splitmix64(std::uint64_t x);
/// Seed for the n-th independent stream derived from a base seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t n);

/// Standard normal pair for (seed, path, step, block). Box-Muller on two
/// 53-bit uniforms from one Philox block.
std::array<double, 2> normal_pair(std::uint64_t seed, std::uint64_t path, std::uint32_t step, std::uint32_t block);

/// Fill `out[0..n)` with independent standard normals keyed by (seed, path, step).
void normals(std::uint64_t seed, std::uint64_t path, std::uint32_t step, int n, double* out);

}  // namespace perronlab
