#pragma once

#include <cstdint>
#include <random>

namespace fueltrends {

using Rng = std::mt19937_64;

// splitmix64, used to turn (seed, stream id...) tuples into well-separated
// engine seeds. Same build + same seed => identical streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(splitmix64(master) ^ splitmix64(stream * 0x9e3779b97f4a7c15ULL + 1));
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(master, a), b);
}

inline Rng make_rng(std::uint64_t master, std::uint64_t stream) {
  return Rng(derive_seed(master, stream));
}

inline double runif(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double rnorm(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

inline double rgamma(Rng& rng, double shape, double rate) {
  return std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
}

inline double rbeta(Rng& rng, double a, double b) {
  double x = std::gamma_distribution<double>(a, 1.0)(rng);
  double y = std::gamma_distribution<double>(b, 1.0)(rng);
  double s = x + y;
  if (s <= 0.0) return 0.5;  // both underflowed; a,b astronomically small
  return x / s;
}

inline long long rbinom(Rng& rng, long long n, double p) {
  if (n <= 0) return 0;
  if (p <= 0.0) return 0;
  if (p >= 1.0) return n;
  return std::binomial_distribution<long long>(n, p)(rng);
}

}  // namespace fueltrends
