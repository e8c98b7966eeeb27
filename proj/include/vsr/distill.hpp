// SPDX-License-Identifier: Apache-2.0
/**
 * @file   distill.hpp
 * @brief  Sequence- and frame-level knowledge distillation from an audio
 *         teacher.
 *
 * Both losses are tau^2 * KL(sharpen(teacher, tau) || softmax(student / tau)),
 * where sharpen(p, tau)_i is proportional to p_i^(1/tau). The frame-level loss
 * averages that quantity over frames.
 */
#ifndef VSR_DISTILL_HPP
#define VSR_DISTILL_HPP

#include <vsr/layers.hpp>
#include <vsr/optim.hpp>

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace vsr {

class DistributionError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

struct KDConfig {
  double temperature = 2.0;
  double beta_seq = 1.0;
  double beta_frame = 1.0;

  void validate() const;
};

/// Rows are probability distributions.
struct TeacherPosteriors {
  Tensor frame;    // [T x V]
  Tensor sequence; // [V]
};

/// Throws DistributionError unless every row of `p` (last axis) is
/// non-negative and sums to 1 within `tol`.
void check_distribution(const Tensor &p, double tol = 1e-9);

/// sum_i p_i ln(p_i / q_i), with 0 ln(0 / q) = 0 and q_i floored at 1e-12.
double kl_divergence(const Array &p, const Array &q);

/// Row-wise p^(1 / tau), renormalised, along the last axis.
Tensor sharpen(const Tensor &p, double tau);

/// student [V] or [B x V]; teacher of the same shape. Batch mean.
Tensor sequence_kd_loss(const Tensor &student_logits, const Tensor &teacher, double tau);
/// student [T x V] or [B x T x V]; mean over all frames.
Tensor frame_kd_loss(const Tensor &student_frame_logits, const Tensor &teacher_frame,
                     double tau);

/// ce + beta_seq * seq_kd + beta_frame * frame_kd; undefined KD terms are skipped.
Tensor combined_loss(const Tensor &ce, const Tensor &seq_kd, const Tensor &frame_kd,
                     const KDConfig &cfg);

struct TeacherConfig {
  int hidden = 32;
  int epochs = 20;
  int batch_size = 8;
  double lr = 1e-2;
  /// Weight of the per-frame cross-entropy added to the sequence loss.
  double frame_weight = 1.0;
};

struct AudioExample {
  std::string clip_id;
  Tensor audio; // [T x A]
  int label = 0;
};

/// Per-frame MLP (A -> hidden -> V, relu); sequence logits are the mean of
/// the frame logits over time.
class AudioTeacher {
public:
  AudioTeacher(Index audio_dim, int hidden, int n_classes, Rng &rng);

  struct Output {
    Tensor frame_logits;    // [B x T x V]
    Tensor sequence_logits; // [B x V]
  };
  Output forward(const Tensor &audio) const; // audio [B x T x A]
  ParamList parameters() const;

  Linear hidden;
  Linear out;
  int n_classes;
};

struct TeacherRun {
  std::vector<double> epoch_top1; // training accuracy per epoch, percent
  std::map<std::string, TeacherPosteriors> posteriors;
};

TeacherRun train_teacher(const std::vector<AudioExample> &train, int n_classes,
                         const TeacherConfig &cfg, std::uint64_t seed);

/// `<dir>/<clip_id>.frame.vsrt` and `<dir>/<clip_id>.seq.vsrt`.
void write_posterior_cache(const std::filesystem::path &dir,
                           const std::map<std::string, TeacherPosteriors> &posteriors);
TeacherPosteriors read_posteriors(const std::filesystem::path &dir, const std::string &clip_id);
bool has_posteriors(const std::filesystem::path &dir, const std::string &clip_id);

} // namespace vsr

#endif // VSR_DISTILL_HPP
