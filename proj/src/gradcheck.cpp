// SPDX-License-Identifier: Apache-2.0
#include <vsr/gradcheck.hpp>
#include <vsr/ops.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace vsr {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

CheckReport finite_diff_check(const std::function<Tensor()> &build,
                              std::span<Tensor> inputs, const GradCheckOptions &opts,
                              std::span<const std::string> names) {
  CheckReport report;
  report.tolerance = opts.tolerance;

  for (Tensor &t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tensor loss = build();
  if (loss.size() != 1)
    throw ShapeError("finite_diff_check: builder must return a scalar");
  backward(loss);

  // (input, element) pairs to check
  std::vector<std::pair<std::size_t, Index>> picks;
  for (std::size_t k = 0; k < inputs.size(); ++k)
    for (Index i = 0; i < inputs[k].size(); ++i)
      picks.emplace_back(k, i);
  if (opts.samples > 0 && opts.samples < static_cast<Index>(picks.size())) {
    std::mt19937_64 rng(opts.seed);
    std::shuffle(picks.begin(), picks.end(), rng);
    picks.resize(static_cast<std::size_t>(opts.samples));
    std::sort(picks.begin(), picks.end());
  }

  report.inputs.resize(inputs.size());
  for (std::size_t k = 0; k < inputs.size(); ++k)
    report.inputs[k].name = k < names.size() ? names[k] : "input" + std::to_string(k);

  NoGradScope no_grad;
  const auto evaluate = [&](std::uint64_t *signature) {
    if (!opts.skip_kinks)
      return build().item();
    KinkProbe probe;
    const double v = build().item();
    *signature = probe.signature();
    return v;
  };
  std::uint64_t base = 0, sig_up = 0, sig_down = 0;
  if (opts.skip_kinks)
    evaluate(&base);
  for (auto [k, i] : picks) {
    Tensor &t = inputs[k];
    const double analytic = t.has_grad() ? t.grad()[i] : 0.0;
    const double x0 = t.data()[i];
    t.data()[i] = x0 + opts.step;
    const double up = evaluate(&sig_up);
    t.data()[i] = x0 - opts.step;
    const double down = evaluate(&sig_down);
    t.data()[i] = x0;
    InputCheck &rec = report.inputs[k];
    if (sig_up != base || sig_down != base) {
      ++rec.skipped;
      continue;
    }
    const double numeric = (up - down) / (2.0 * opts.step);
    const double err = relative_error(analytic, numeric, opts.floor);
    ++rec.checked;
    if (err > rec.max_rel_error || rec.worst_index < 0) {
      rec.max_rel_error = std::max(rec.max_rel_error, err);
      rec.worst_index = i;
      rec.analytic_at_worst = analytic;
      rec.numeric_at_worst = numeric;
    }
    report.max_rel_error = std::max(report.max_rel_error, err);
  }
  return report;
}

} // namespace vsr
