// SPDX-License-Identifier: Apache-2.0
/**
 * @file   augment.hpp
 * @brief  Mixup and label smoothing.
 *
 * Mixup blends two inputs x = lambda * x_a + (1 - lambda) * x_b and the loss
 * the same way. Label smoothing puts eps / N on every non-target class and
 * 1 - (N - 1) / N * eps on the target. When both are active each one-hot
 * target is smoothed before the lambda-weighted sum.
 */
#ifndef VSR_AUGMENT_HPP
#define VSR_AUGMENT_HPP

#include <vsr/random.hpp>
#include <vsr/tensor.hpp>

#include <span>
#include <vector>

namespace vsr {

struct MixupSample {
  double lambda = 1.0;
  Tensor x_mixed;
  int y_a = 0;
  int y_b = 0;
};

/// lambda ~ Beta(alpha, alpha).
MixupSample mixup(const Tensor &x_a, const Tensor &x_b, int y_a, int y_b, double alpha,
                  Rng &rng);
MixupSample mixup_with_lambda(const Tensor &x_a, const Tensor &x_b, int y_a, int y_b,
                              double lambda);

/// In-batch mixup: sample b of row i is row perm[i] of the same batch.
struct MixedBatch {
  double lambda = 1.0;
  Tensor x_mixed;
  std::vector<int> y_a;
  std::vector<int> y_b;
  std::vector<int> perm;
};

MixedBatch mixup_batch(const Tensor &batch, std::span<const int> labels, double alpha,
                       Rng &rng);

struct SmoothedLabelDistribution {
  Array q;
  double epsilon = 0.0;
  int target = 0;

  int classes() const { return static_cast<int>(q.size()); }
};

SmoothedLabelDistribution smooth_labels(int y, int n_classes, double epsilon);

/// Rows of smoothed targets, [B x V].
Tensor smoothed_targets(std::span<const int> labels, int n_classes, double epsilon);

/// -sum_i q_i log softmax(logits)_i for logits [V].
Tensor smoothed_cross_entropy(const Tensor &logits, const SmoothedLabelDistribution &q);

/// Batch mean of -sum_i q_bi log softmax(logits_b)_i, logits and targets [B x V].
Tensor soft_cross_entropy(const Tensor &logits, const Tensor &targets);

/// lambda * CE(logits, q(y_a)) + (1 - lambda) * CE(logits, q(y_b)), averaged
/// over the batch. `logits` is [V] (one label each) or [B x V].
Tensor mixup_loss(const Tensor &logits, std::span<const int> y_a,
                  std::span<const int> y_b, double lambda, double epsilon);
Tensor mixup_loss(const Tensor &logits, int y_a, int y_b, double lambda, double epsilon);

} // namespace vsr

#endif // VSR_AUGMENT_HPP
