#pragma once

#include <cstdint>
#include <random>

namespace nlw {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; maps (base, stream) to a well-mixed child seed.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Beta(a, b) through the ratio of two Gamma draws.
inline double sample_beta(double a, double b, Rng& rng) {
  std::gamma_distribution<double> ga(a, 1.0);
  std::gamma_distribution<double> gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  if (x + y == 0.0) return 0.5;
  return x / (x + y);
}

}  // namespace nlw
