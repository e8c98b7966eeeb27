// SPDX-License-Identifier: Apache-2.0
/**
 * @file   layers.hpp
 * @brief  Parameterised building blocks: linear, conv, SE residual block, GRU.
 *
 * Weights are Glorot-uniform, U(-sqrt(6 / (fan_in + fan_out)), +...), biases
 * zero except the GRU update gate which starts at +1.
 */
#ifndef VSR_LAYERS_HPP
#define VSR_LAYERS_HPP

#include <vsr/ops.hpp>
#include <vsr/random.hpp>

#include <optional>
#include <string>
#include <vector>

namespace vsr {

struct NamedParam {
  std::string name;
  Tensor tensor;
};
using ParamList = std::vector<NamedParam>;

Index count_parameters(const ParamList &params);

Tensor glorot_uniform(Shape shape, Index fan_in, Index fan_out, Rng &rng);

/// y = x W + b with W [in x out].
class Linear {
public:
  Linear() = default;
  Linear(Index in, Index out, Rng &rng);

  Tensor forward(const Tensor &x) const;
  void collect(const std::string &prefix, ParamList &out) const;

  Tensor weight;
  Tensor bias;
};

class Conv2d {
public:
  Conv2d() = default;
  /// Without `with_bias` the bias tensor stays undefined (a following batch
  /// norm supplies the shift).
  Conv2d(Index in, Index out, int kernel, int stride, int padding, Rng &rng,
         bool with_bias = true);

  Tensor forward(const Tensor &x) const;
  void collect(const std::string &prefix, ParamList &out) const;

  Tensor weight;
  Tensor bias;
  int stride = 1;
  int padding = 0;
};

/// Batch normalization over every axis but 1. Training mode normalizes with
/// the batch statistics and folds them into the running estimates
/// (unbiased variance); evaluation mode uses the running estimates only.
class BatchNorm {
public:
  BatchNorm() = default;
  explicit BatchNorm(Index channels, double momentum = 0.1, double eps = 1e-5);

  Tensor forward(const Tensor &x) const;
  void collect(const std::string &prefix, ParamList &out) const;
  /// Running mean and variance, for checkpoints.
  void collect_buffers(const std::string &prefix, ParamList &out) const;

  Tensor gamma, beta;
  Tensor running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-sample channel descriptor: mean over the spatial axes of [N x C x h x w].
Tensor squeeze(const Tensor &f);

/// Residual unit: conv3x3(stride) -> norm -> relu -> conv3x3 -> norm, rescaled
/// channel-wise by s = sigmoid(W2 relu(W1 squeeze(.))), added to the
/// shortcut, then relu. The shortcut is a strided 1x1 conv + norm whenever
/// the shape changes.
class SEBlock {
public:
  SEBlock() = default;
  SEBlock(Index in, Index out, int stride, int reduction, Rng &rng);

  Tensor forward(const Tensor &x) const;
  /// The excitation vector s, [N x C], for a residual-branch map.
  Tensor excitation(const Tensor &branch) const;
  void collect(const std::string &prefix, ParamList &out) const;
  void collect_buffers(const std::string &prefix, ParamList &out) const;

  Conv2d conv1, conv2;
  BatchNorm norm1, norm2;
  std::optional<Conv2d> shortcut;
  std::optional<BatchNorm> shortcut_norm;
  Linear fc1, fc2;
};

/// One direction of a GRU layer:
///   z = sigmoid(x Wz + h Uz + bz), r = sigmoid(x Wr + h Ur + br),
///   n = tanh(x Wn + (r * h) Un + bn), h' = z * h + (1 - z) * n.
class GRUDirection {
public:
  GRUDirection() = default;
  GRUDirection(Index input, Index hidden, Rng &rng);

  /// x [B x T x D] -> one [B x H] state per step, in time order.
  std::vector<Tensor> run(const Tensor &x, bool reverse) const;
  /// Single step from state h [B x H] with input x_t [B x D].
  Tensor step(const Tensor &x_t, const Tensor &h) const;
  void collect(const std::string &prefix, ParamList &out) const;

  Index hidden = 0;
  Tensor w_x;  // [D x 3H], gate order z | r | n
  Tensor u_zr; // [H x 2H]
  Tensor u_n;  // [H x H]
  Tensor bias; // [3H]

private:
  Tensor step_projected(const Tensor &gx, const Tensor &h) const;
};

/// Stacked bidirectional GRU; dropout between layers.
class BiGRU {
public:
  BiGRU() = default;
  BiGRU(Index input, Index hidden, int layers, double dropout, Rng &rng);

  /// [B x T x D] -> [B x T x 2H], forward and backward states concatenated.
  Tensor forward(const Tensor &x, Rng *dropout_rng) const;
  void collect(const std::string &prefix, ParamList &out) const;

  std::vector<GRUDirection> fwd, bwd;
  double dropout = 0.0;
};

} // namespace vsr

#endif // VSR_LAYERS_HPP
