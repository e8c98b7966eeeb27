// SPDX-License-Identifier: Apache-2.0
/**
 * @file   gradcheck.hpp
 * @brief  Central finite-difference verification of reverse-mode gradients.
 *
 * For each checked element x_i the numerical derivative is
 * (f(x + h e_i) - f(x - h e_i)) / 2h. The error against the analytic value a_i
 * is |a_i - n_i| / max(|a_i|, |n_i|, floor); the floor keeps near-zero
 * components from turning round-off into huge relative errors.
 */
#ifndef VSR_GRADCHECK_HPP
#define VSR_GRADCHECK_HPP

#include <vsr/tensor.hpp>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace vsr {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-6;
  double floor = 1e-2;
  /// Total number of elements checked across all inputs; 0 checks everything.
  Index samples = 0;
  std::uint64_t seed = 0;
  /// Skip probes whose +-step evaluations leave the relu sign pattern of the
  /// unperturbed point; central differences are meaningless across a kink.
  bool skip_kinks = false;
};

struct InputCheck {
  std::string name;
  Index checked = 0;
  Index skipped = 0;
  double max_rel_error = 0.0;
  Index worst_index = -1;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

struct CheckReport {
  std::vector<InputCheck> inputs;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_rel_error < tolerance; }
};

/// `build` must construct a scalar loss from the current values of `inputs`
/// and be deterministic. Input values are restored before returning.
CheckReport finite_diff_check(const std::function<Tensor()> &build,
                              std::span<Tensor> inputs,
                              const GradCheckOptions &opts = {},
                              std::span<const std::string> names = {});

double relative_error(double analytic, double numeric, double floor);

} // namespace vsr

#endif // VSR_GRADCHECK_HPP
