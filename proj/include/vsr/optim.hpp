// SPDX-License-Identifier: Apache-2.0
#ifndef VSR_OPTIM_HPP
#define VSR_OPTIM_HPP

#include <vsr/layers.hpp>

namespace vsr {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Parameters without a gradient are treated as
/// having a zero gradient; a non-finite gradient aborts the step.
class Adam {
public:
  Adam(ParamList params, AdamConfig cfg = {});

  void step(double lr);
  void zero_grad();
  long steps() const { return steps_; }

private:
  ParamList params_;
  AdamConfig cfg_;
  std::vector<Array> m_, v_;
  long steps_ = 0;
};

/// lr_min + (lr0 - lr_min) * (1 + cos(pi * step / total)) / 2, 0 <= step <= total.
double cosine_lr(long step, long total, double lr0, double lr_min = 0.0);

} // namespace vsr

#endif // VSR_OPTIM_HPP
