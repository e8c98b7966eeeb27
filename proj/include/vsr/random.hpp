// SPDX-License-Identifier: Apache-2.0
#ifndef VSR_RANDOM_HPP
#define VSR_RANDOM_HPP

#include <cstdint>
#include <random>
#include <string_view>

namespace vsr {

using Rng = std::mt19937_64;

/// Stable across platforms: FNV-1a over the tag folded into splitmix64.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

/// Beta(a, b) via the ratio of two Gamma draws.
double sample_beta(Rng &rng, double a, double b);

double uniform(Rng &rng, double lo, double hi);
double normal(Rng &rng, double mean = 0.0, double sigma = 1.0);

} // namespace vsr

#endif // VSR_RANDOM_HPP
