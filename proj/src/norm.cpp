// SPDX-License-Identifier: Apache-2.0
#include <vsr/ops.hpp>

namespace vsr {

Tensor batch_norm(const Tensor &x, const Tensor &gamma, const Tensor &beta, double eps,
                  const Array *mean, const Array *var, Array *batch_mean, Array *batch_var) {
  if (x.rank() < 2)
    throw ShapeError("batch_norm expects [N x C x ...], got " + to_string(x.shape()));
  const Index n = x.dim(0), c = x.dim(1);
  const Index inner = x.size() / (n * c);
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c})
    throw ShapeError("batch_norm: gamma/beta must be [" + std::to_string(c) + "]");
  if ((mean == nullptr) != (var == nullptr))
    throw std::invalid_argument("batch_norm: give both running statistics or neither");
  const bool batch_stats = mean == nullptr;
  const Index m = n * inner;

  // Sample s is an [inner x c] column-major block: column ch is channel ch.
  auto block = [c, inner](const Array &a, Index s) {
    return Eigen::Map<const Eigen::ArrayXXd>(a.data() + s * c * inner, inner, c);
  };
  Array mu = Array::Zero(c), sigma2 = Array::Zero(c);
  if (batch_stats) {
    for (Index s = 0; s < n; ++s)
      mu += block(x.data(), s).colwise().sum().transpose();
    mu /= static_cast<double>(m);
    for (Index s = 0; s < n; ++s)
      sigma2 +=
          (block(x.data(), s).rowwise() - mu.transpose()).square().colwise().sum().transpose();
    sigma2 /= static_cast<double>(m);
    if (batch_mean)
      *batch_mean = mu;
    if (batch_var)
      *batch_var = sigma2;
  } else {
    if (mean->size() != c || var->size() != c)
      throw ShapeError("batch_norm: running statistics must have " + std::to_string(c) +
                       " entries");
    mu = *mean;
    sigma2 = *var;
  }
  const Array inv_std = (sigma2 + eps).rsqrt();

  Array xhat(x.size()), out(x.size());
  for (Index s = 0; s < n; ++s) {
    Eigen::Map<Eigen::ArrayXXd> h(xhat.data() + s * c * inner, inner, c);
    h = (block(x.data(), s).rowwise() - mu.transpose()).rowwise() * inv_std.transpose();
    Eigen::Map<Eigen::ArrayXXd>(out.data() + s * c * inner, inner, c) =
        (h.rowwise() * gamma.data().transpose()).rowwise() + beta.data().transpose();
  }

  return Tensor::make(
      x.shape(), std::move(out), "batch_norm", {x, gamma, beta},
      [n, m, batch_stats, inv_std, block, xhat = std::move(xhat)](Node &node) {
        Node &px = *node.parents[0];
        Node &pg = *node.parents[1];
        Node &pb = *node.parents[2];
        const Index c = inv_std.size();
        Array dg = Array::Zero(c), db = Array::Zero(c);
        for (Index s = 0; s < n; ++s) {
          dg += (block(node.grad, s) * block(xhat, s)).colwise().sum().transpose();
          db += block(node.grad, s).colwise().sum().transpose();
        }
        if (pg.requires_grad)
          pg.grad_buffer() += dg;
        if (pb.requires_grad)
          pb.grad_buffer() += db;
        if (!px.requires_grad)
          return;
        const Array scale = pg.value * inv_std;
        const Index inner = xhat.size() / (n * c);
        Array &gx = px.grad_buffer();
        for (Index s = 0; s < n; ++s) {
          Eigen::Map<Eigen::ArrayXXd> dst(gx.data() + s * c * inner, inner, c);
          if (batch_stats) {
            // dx = gamma * inv_std * (dy - mean(dy) - xhat * mean(dy * xhat))
            const Array mdy = db / static_cast<double>(m);
            const Array mdyx = dg / static_cast<double>(m);
            dst += ((block(node.grad, s).rowwise() - mdy.transpose()) -
                    block(xhat, s).rowwise() * mdyx.transpose())
                       .rowwise() *
                   scale.transpose();
          } else {
            dst += block(node.grad, s).rowwise() * scale.transpose();
          }
        }
      });
}

} // namespace vsr
