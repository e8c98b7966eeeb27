// SPDX-License-Identifier: Apache-2.0
/**
 * @file   gradsuite.hpp
 * @brief  Finite-difference verification of every differentiable operation.
 *
 * Each entry draws random shapes and values per case, contracts the output
 * with a random weight tensor to get a scalar, and compares every input
 * gradient element against central differences.
 */
#ifndef VSR_GRADSUITE_HPP
#define VSR_GRADSUITE_HPP

#include <vsr/gradcheck.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace vsr {

struct OpCheckResult {
  std::string op;
  int cases = 0;
  Index elements = 0;
  /// Probes dropped because they straddled a relu kink.
  Index skipped = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradSuiteOptions {
  int cases = 100;
  /// Random instantiations of the composed network (each checks a parameter
  /// subsample); the network is far more expensive than a single op.
  int network_cases = 100;
  double network_fraction = 0.05;
  std::uint64_t seed = 1;
  GradCheckOptions check;
};

/// Names of the checked operations, in report order.
std::vector<std::string> grad_suite_ops();

/// Runs the whole suite, or only `only` when non-empty.
std::vector<OpCheckResult> run_grad_suite(const GradSuiteOptions &opts = {},
                                          const std::vector<std::string> &only = {});

} // namespace vsr

#endif // VSR_GRADSUITE_HPP
