// SPDX-License-Identifier: Apache-2.0
/**
 * @file   ops.hpp
 * @brief  Differentiable tensor operations.
 *
 * Broadcasting is limited to scalar-times-tensor and add_bias() along axis 1.
 * Everything else must be made explicit with reshape/expand/narrow/concat.
 * conv2d uses the cross-correlation convention (no kernel flip).
 */
#ifndef VSR_OPS_HPP
#define VSR_OPS_HPP

#include <vsr/tensor.hpp>

#include <cstdint>
#include <random>
#include <span>

namespace vsr {

// elementwise, identical shapes
Tensor add(const Tensor &a, const Tensor &b);
Tensor sub(const Tensor &a, const Tensor &b);
Tensor mul(const Tensor &a, const Tensor &b);
Tensor scale(const Tensor &x, double s);
Tensor add_scalar(const Tensor &x, double c);

inline Tensor operator+(const Tensor &a, const Tensor &b) { return add(a, b); }
inline Tensor operator-(const Tensor &a, const Tensor &b) { return sub(a, b); }
inline Tensor operator*(const Tensor &a, const Tensor &b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor &x) { return scale(x, s); }
inline Tensor operator*(const Tensor &x, double s) { return scale(x, s); }
inline Tensor operator-(const Tensor &x) { return scale(x, -1.0); }

Tensor sigmoid(const Tensor &x);
Tensor tanh(const Tensor &x);
Tensor relu(const Tensor &x);
Tensor exp(const Tensor &x);
Tensor log(const Tensor &x);

/// [m x k] * [k x n]
Tensor matmul(const Tensor &a, const Tensor &b);

/// x: [N x C x ...], bias: [C]
Tensor add_bias(const Tensor &x, const Tensor &bias);

/// input [N x C x H x W], kernel [K x C x kh x kw] -> [N x K x H' x W'],
/// H' = (H + 2 * padding - kh) / stride + 1. Zero padding.
Tensor conv2d(const Tensor &input, const Tensor &kernel, int stride = 1,
              int padding = 0);

Tensor reshape(const Tensor &x, Shape shape);
/// Repeats size-1 axes up to `shape`; rank must match.
Tensor expand(const Tensor &x, Shape shape);
Tensor narrow(const Tensor &x, int axis, Index start, Index length);
/// narrow() of length one with the axis removed.
Tensor select(const Tensor &x, int axis, Index index);
Tensor concat(std::span<const Tensor> parts, int axis);
/// Inserts a new axis at `axis` and concatenates along it.
Tensor stack(std::span<const Tensor> parts, int axis);

enum class Reduce { sum, mean };
Tensor sum(const Tensor &x);
Tensor mean(const Tensor &x);
/// Reduces over `axes` and drops them from the shape.
Tensor reduce(const Tensor &x, Reduce kind, std::span<const int> axes);
Tensor sum(const Tensor &x, std::initializer_list<int> axes);
Tensor mean(const Tensor &x, std::initializer_list<int> axes);
/// Non-overlapping k x k average pooling over the last two axes of
/// [N x C x H x W]; H and W must be divisible by k.
Tensor avg_pool2d(const Tensor &x, int k);

/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor &x, int axis = -1);
Tensor log_softmax(const Tensor &x, int axis = -1);

/// Per-channel normalization of [N x C x ...] followed by gamma * xhat + beta.
/// With `mean` and `var` null the statistics come from the batch (biased
/// variance over every axis but 1) and are written to `batch_mean` /
/// `batch_var` when given; otherwise the supplied statistics are constants.
Tensor batch_norm(const Tensor &x, const Tensor &gamma, const Tensor &beta, double eps,
                  const Array *mean = nullptr, const Array *var = nullptr,
                  Array *batch_mean = nullptr, Array *batch_var = nullptr);

/// Inverted dropout: keeps with probability 1 - p and rescales by 1/(1 - p).
/// Identity outside training_mode().
Tensor dropout(const Tensor &x, double p, std::mt19937_64 &rng);

/// While alive, every relu on this thread folds the sign pattern of its input
/// into signature(). Two evaluations with equal signatures took the same
/// linear piece of every relu.
class KinkProbe {
public:
  KinkProbe();
  ~KinkProbe();
  KinkProbe(const KinkProbe &) = delete;
  KinkProbe &operator=(const KinkProbe &) = delete;

  std::uint64_t signature() const { return hash_; }

private:
  friend Tensor relu(const Tensor &x);
  std::uint64_t hash_ = 14695981039346656037ull;
  KinkProbe *previous_;
};

} // namespace vsr

#endif // VSR_OPS_HPP
