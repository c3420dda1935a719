#include "perronlab/rng.hpp"

#include <cmath>
#include <numbers>

namespace perronlab {

namespace {

constexpr std::uint32_t kW0 = 0x9E3779B9u;
constexpr std::uint32_t kW1 = 0xBB67AE85u;
constexpr std::uint32_t kM0 = 0xD2511F53u;
constexpr std::uint32_t kM1 = 0xCD9E8D57u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo, std::uint32_t& hi) {
  std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  lo = static_cast<std::uint32_t>(p);
  hi = static_cast<std::uint32_t>(p >> 32);
}

inline double to_unit(std::uint32_t hi, std::uint32_t lo) {
  // 53 bits, in (0, 1]
  std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> c, std::array<std::uint32_t, 2> k) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t lo0, hi0, lo1, hi1;
    mulhilo(kM0, c[0], lo0, hi0);
    mulhilo(kM1, c[2], lo1, hi1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += kW0;
    k[1] += kW1;
  }
  return c;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t n) { return splitmix64(seed ^ splitmix64(n + 0x632BE59BD9B4E019ull)); }

std::array<double, 2> normal_pair(std::uint64_t seed, std::uint64_t path, std::uint32_t step, std::uint32_t block) {
  auto r = philox4x32({static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32), step, block},
                      {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)});
  double u1 = to_unit(r[0], r[1]);
  double u2 = to_unit(r[2], r[3]);
  double rad = std::sqrt(-2.0 * std::log(u1));
  double ang = 2.0 * std::numbers::pi * u2;
  return {rad * std::cos(ang), rad * std::sin(ang)};
}

void normals(std::uint64_t seed, std::uint64_t path, std::uint32_t step, int n, double* out) {
  for (int j = 0; j < n; j += 2) {
    auto z = normal_pair(seed, path, step, static_cast<std::uint32_t>(j / 2));
    out[j] = z[0];
    if (j + 1 < n) out[j + 1] = z[1];
  }
}

}  // namespace perronlab
