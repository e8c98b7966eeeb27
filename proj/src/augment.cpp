// SPDX-License-Identifier: Apache-2.0
#include <vsr/augment.hpp>
#include <vsr/ops.hpp>

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace vsr {

MixupSample mixup_with_lambda(const Tensor &x_a, const Tensor &x_b, int y_a, int y_b,
                              double lambda) {
  if (x_a.shape() != x_b.shape())
    throw ShapeError("mixup: shape mismatch " + to_string(x_a.shape()) + " vs " +
                     to_string(x_b.shape()));
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("mixup: lambda must be in [0, 1]");
  MixupSample s;
  s.lambda = lambda;
  s.y_a = y_a;
  s.y_b = y_b;
  if (lambda == 1.0)
    s.x_mixed = Tensor(x_a.shape(), x_a.data());
  else
    s.x_mixed = Tensor(x_a.shape(), lambda * x_a.data() + (1.0 - lambda) * x_b.data());
  return s;
}

MixupSample mixup(const Tensor &x_a, const Tensor &x_b, int y_a, int y_b, double alpha,
                  Rng &rng) {
  return mixup_with_lambda(x_a, x_b, y_a, y_b, sample_beta(rng, alpha, alpha));
}

MixedBatch mixup_batch(const Tensor &batch, std::span<const int> labels, double alpha,
                       Rng &rng) {
  const Index n = batch.dim(0);
  if (static_cast<Index>(labels.size()) != n)
    throw ShapeError("mixup_batch: label count does not match batch");
  MixedBatch out;
  out.perm.resize(static_cast<std::size_t>(n));
  std::iota(out.perm.begin(), out.perm.end(), 0);
  std::shuffle(out.perm.begin(), out.perm.end(), rng);
  out.lambda = sample_beta(rng, alpha, alpha);
  const Index row = batch.size() / n;
  Array mixed(batch.size());
  for (Index i = 0; i < n; ++i) {
    const Index j = out.perm[static_cast<std::size_t>(i)];
    mixed.segment(i * row, row) = out.lambda * batch.data().segment(i * row, row) +
                                  (1.0 - out.lambda) * batch.data().segment(j * row, row);
    out.y_a.push_back(labels[static_cast<std::size_t>(i)]);
    out.y_b.push_back(labels[static_cast<std::size_t>(j)]);
  }
  out.x_mixed = Tensor(batch.shape(), std::move(mixed));
  return out;
}

SmoothedLabelDistribution smooth_labels(int y, int n_classes, double epsilon) {
  if (n_classes < 1 || y < 0 || y >= n_classes)
    throw std::out_of_range("class id " + std::to_string(y) + " outside [0, " +
                            std::to_string(n_classes) + ")");
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw std::invalid_argument("label smoothing epsilon must be in [0, 1]");
  const double n = static_cast<double>(n_classes);
  SmoothedLabelDistribution d;
  d.epsilon = epsilon;
  d.target = y;
  d.q = Array::Constant(n_classes, epsilon / n);
  d.q[y] = 1.0 - (n - 1.0) / n * epsilon;
  return d;
}

Tensor smoothed_targets(std::span<const int> labels, int n_classes, double epsilon) {
  const auto b = static_cast<Index>(labels.size());
  Array q(b * n_classes);
  for (Index i = 0; i < b; ++i)
    q.segment(i * n_classes, n_classes) =
        smooth_labels(labels[static_cast<std::size_t>(i)], n_classes, epsilon).q;
  return Tensor({b, n_classes}, std::move(q));
}

Tensor soft_cross_entropy(const Tensor &logits, const Tensor &targets) {
  if (logits.shape() != targets.shape() || logits.rank() != 2)
    throw ShapeError("soft_cross_entropy: logits " + to_string(logits.shape()) +
                     " vs targets " + to_string(targets.shape()));
  return scale(sum(mul(log_softmax(logits, 1), targets)),
               -1.0 / static_cast<double>(logits.dim(0)));
}

Tensor smoothed_cross_entropy(const Tensor &logits, const SmoothedLabelDistribution &q) {
  if (logits.rank() != 1 || logits.dim(0) != q.classes())
    throw ShapeError("smoothed_cross_entropy: " + std::to_string(q.classes()) +
                     " classes vs logits " + to_string(logits.shape()));
  const Index v = logits.dim(0);
  return soft_cross_entropy(reshape(logits, {1, v}), Tensor({1, v}, q.q));
}

Tensor mixup_loss(const Tensor &logits, std::span<const int> y_a,
                  std::span<const int> y_b, double lambda, double epsilon) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("mixup_loss: lambda must be in [0, 1]");
  const Tensor rows = logits.rank() == 1 ? reshape(logits, {1, logits.dim(0)}) : logits;
  const int v = static_cast<int>(rows.dim(1));
  if (static_cast<Index>(y_a.size()) != rows.dim(0) || y_b.size() != y_a.size())
    throw ShapeError("mixup_loss: label count does not match logits");
  const Tensor ce_a = soft_cross_entropy(rows, smoothed_targets(y_a, v, epsilon));
  const Tensor ce_b = soft_cross_entropy(rows, smoothed_targets(y_b, v, epsilon));
  return add(scale(ce_a, lambda), scale(ce_b, 1.0 - lambda));
}

Tensor mixup_loss(const Tensor &logits, int y_a, int y_b, double lambda, double epsilon) {
  const int a[] = {y_a};
  const int b[] = {y_b};
  return mixup_loss(logits, a, b, lambda, epsilon);
}

} // namespace vsr
