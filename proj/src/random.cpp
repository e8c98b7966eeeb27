// SPDX-License-Identifier: Apache-2.0
#include <vsr/random.hpp>

#include <stdexcept>

namespace vsr {

namespace {
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}
} // namespace

std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return splitmix64(splitmix64(base) ^ h);
}

double sample_beta(Rng &rng, double a, double b) {
  if (a <= 0.0 || b <= 0.0)
    throw std::invalid_argument("Beta parameters must be positive");
  std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  if (x + y == 0.0)
    return 0.5;
  return x / (x + y);
}

double uniform(Rng &rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double normal(Rng &rng, double mean, double sigma) {
  return std::normal_distribution<double>(mean, sigma)(rng);
}

} // namespace vsr
