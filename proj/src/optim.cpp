// SPDX-License-Identifier: Apache-2.0
#include <vsr/optim.hpp>

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace vsr {

Adam::Adam(ParamList params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto &p : params_) {
    m_.push_back(Array::Zero(p.tensor.size()));
    v_.push_back(Array::Zero(p.tensor.size()));
  }
}

void Adam::step(double lr) {
  for (const auto &p : params_)
    if (p.tensor.has_grad() && !p.tensor.grad().allFinite())
      throw std::runtime_error("non-finite gradient in parameter " + p.name);
  ++steps_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor t = params_[i].tensor;
    if (t.has_grad()) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * t.grad();
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * t.grad().square();
    } else {
      m_[i] *= cfg_.beta1;
      v_[i] *= cfg_.beta2;
    }
    if (lr != 0.0)
      t.data() -= lr * (m_[i] / c1) / ((v_[i] / c2).sqrt() + cfg_.eps);
  }
}

void Adam::zero_grad() {
  for (auto &p : params_)
    p.tensor.zero_grad();
}

double cosine_lr(long step, long total, double lr0, double lr_min) {
  if (total <= 0 || step < 0 || step > total)
    throw std::out_of_range("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                            std::to_string(total) + "]");
  const double progress = static_cast<double>(step) / static_cast<double>(total);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

} // namespace vsr
