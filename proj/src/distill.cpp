// SPDX-License-Identifier: Apache-2.0
#include <vsr/augment.hpp>
#include <vsr/distill.hpp>
#include <vsr/io.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vsr {

void KDConfig::validate() const {
  if (!(temperature > 0.0))
    throw std::invalid_argument("KD temperature must be positive");
  if (beta_seq < 0.0 || beta_frame < 0.0)
    throw std::invalid_argument("KD weights must be non-negative");
}

void check_distribution(const Tensor &p, double tol) {
  const Index v = p.dim(-1);
  const Index rows = p.size() / v;
  for (Index r = 0; r < rows; ++r) {
    const auto row = p.data().segment(r * v, v);
    if ((row < 0.0).any() || !row.allFinite())
      throw DistributionError("distribution has negative or non-finite entries");
    if (std::abs(row.sum() - 1.0) > tol)
      throw DistributionError("distribution sums to " + std::to_string(row.sum()));
  }
}

double kl_divergence(const Array &p, const Array &q) {
  if (p.size() != q.size() || p.size() == 0)
    throw DistributionError("kl_divergence: size mismatch");
  check_distribution(Tensor({p.size()}, p));
  check_distribution(Tensor({q.size()}, q));
  double kl = 0.0;
  for (Index i = 0; i < p.size(); ++i)
    if (p[i] > 0.0)
      kl += p[i] * std::log(p[i] / std::max(q[i], 1e-12));
  return kl;
}

Tensor sharpen(const Tensor &p, double tau) {
  const Index v = p.dim(-1);
  const Index rows = p.size() / v;
  Array out = p.data();
  if (tau != 1.0) {
    for (Index r = 0; r < rows; ++r) {
      auto row = out.segment(r * v, v);
      row = row.pow(1.0 / tau);
      row /= row.sum();
    }
  }
  return Tensor(p.shape(), std::move(out));
}

Tensor sequence_kd_loss(const Tensor &student_logits, const Tensor &teacher, double tau) {
  if (!(tau > 0.0))
    throw std::invalid_argument("KD temperature must be positive");
  if (student_logits.shape() != teacher.shape())
    throw ShapeError("sequence_kd_loss: student " + to_string(student_logits.shape()) +
                     " vs teacher " + to_string(teacher.shape()));
  check_distribution(teacher);
  const Index v = student_logits.dim(-1);
  const Index rows = student_logits.size() / v;
  const Tensor target = sharpen(reshape(teacher, {rows, v}).detach(), tau);
  double neg_entropy = 0.0;
  for (Index i = 0; i < target.size(); ++i)
    if (target[i] > 0.0)
      neg_entropy += target[i] * std::log(target[i]);
  const Tensor log_q = log_softmax(scale(reshape(student_logits, {rows, v}), 1.0 / tau), 1);
  const double inv_rows = 1.0 / static_cast<double>(rows);
  const Tensor kl = add_scalar(scale(sum(mul(log_q, target)), -inv_rows), neg_entropy * inv_rows);
  return scale(kl, tau * tau);
}

Tensor frame_kd_loss(const Tensor &student_frame_logits, const Tensor &teacher_frame,
                     double tau) {
  if (student_frame_logits.rank() < 2 || student_frame_logits.shape() != teacher_frame.shape())
    throw ShapeError("frame_kd_loss: student " + to_string(student_frame_logits.shape()) +
                     " vs teacher " + to_string(teacher_frame.shape()));
  const Index v = student_frame_logits.dim(-1);
  const Index rows = student_frame_logits.size() / v;
  return sequence_kd_loss(reshape(student_frame_logits, {rows, v}),
                          reshape(teacher_frame, {rows, v}), tau);
}

Tensor combined_loss(const Tensor &ce, const Tensor &seq_kd, const Tensor &frame_kd,
                     const KDConfig &cfg) {
  Tensor total = ce;
  if (seq_kd.defined() && cfg.beta_seq != 0.0)
    total = add(total, scale(seq_kd, cfg.beta_seq));
  if (frame_kd.defined() && cfg.beta_frame != 0.0)
    total = add(total, scale(frame_kd, cfg.beta_frame));
  return total;
}

AudioTeacher::AudioTeacher(Index audio_dim, int hidden_units, int classes, Rng &rng)
    : hidden(audio_dim, hidden_units, rng), out(hidden_units, classes, rng),
      n_classes(classes) {}

AudioTeacher::Output AudioTeacher::forward(const Tensor &audio) const {
  if (audio.rank() != 3)
    throw ShapeError("teacher expects [B x T x A], got " + to_string(audio.shape()));
  const Index b = audio.dim(0), t = audio.dim(1), a = audio.dim(2);
  const Tensor frames = reshape(audio, {b * t, a});
  const Tensor logits = out.forward(relu(hidden.forward(frames)));
  Output o;
  o.frame_logits = reshape(logits, {b, t, static_cast<Index>(n_classes)});
  o.sequence_logits = mean(o.frame_logits, {1});
  return o;
}

ParamList AudioTeacher::parameters() const {
  ParamList p;
  hidden.collect("teacher.hidden", p);
  out.collect("teacher.out", p);
  return p;
}

namespace {

Tensor stack_audio(const std::vector<AudioExample> &data, std::span<const std::size_t> idx) {
  std::vector<Tensor> parts;
  for (std::size_t i : idx)
    parts.push_back(data[i].audio);
  return stack(parts, 0);
}

} // namespace

TeacherRun train_teacher(const std::vector<AudioExample> &train, int n_classes,
                         const TeacherConfig &cfg, std::uint64_t seed) {
  if (train.empty())
    throw std::invalid_argument("teacher training set is empty");
  for (const auto &ex : train)
    if (!ex.audio.defined() || ex.audio.rank() != 2)
      throw std::invalid_argument("clip " + ex.clip_id + " has no audio stream");
  Rng rng(derive_seed(seed, "teacher"));
  AudioTeacher teacher(train.front().audio.dim(1), cfg.hidden, n_classes, rng);
  Adam adam(teacher.parameters());

  TeacherRun run;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto bs = static_cast<std::size_t>(std::max(1, cfg.batch_size));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t s = 0; s < order.size(); s += bs) {
      const std::span<const std::size_t> idx(order.data() + s, std::min(bs, order.size() - s));
      std::vector<int> labels;
      for (std::size_t i : idx)
        labels.push_back(train[i].label);
      adam.zero_grad();
      const auto o = teacher.forward(stack_audio(train, idx));
      Tensor loss =
          soft_cross_entropy(o.sequence_logits, smoothed_targets(labels, n_classes, 0.0));
      if (cfg.frame_weight > 0.0) {
        // every frame predicts the word, so a frame's posterior spreads over
        // the classes its sound is consistent with
        const Index frames = o.frame_logits.dim(1);
        std::vector<int> frame_labels;
        for (int y : labels)
          frame_labels.insert(frame_labels.end(), static_cast<std::size_t>(frames), y);
        const Tensor frame_ce =
            soft_cross_entropy(reshape(o.frame_logits, {o.frame_logits.dim(0) * frames, n_classes}),
                               smoothed_targets(frame_labels, n_classes, 0.0));
        loss = add(loss, scale(frame_ce, cfg.frame_weight));
      }
      backward(loss);
      adam.step(cfg.lr);
    }
    // training accuracy after the epoch
    NoGradScope no_grad;
    std::size_t correct = 0;
    for (std::size_t s = 0; s < train.size(); s += bs) {
      std::vector<std::size_t> idx;
      for (std::size_t i = s; i < std::min(train.size(), s + bs); ++i)
        idx.push_back(i);
      const auto o = teacher.forward(stack_audio(train, idx));
      for (std::size_t k = 0; k < idx.size(); ++k) {
        const auto row = o.sequence_logits.data().segment(static_cast<Index>(k) * n_classes,
                                                          n_classes);
        Index arg = 0;
        row.maxCoeff(&arg);
        correct += arg == train[idx[k]].label;
      }
    }
    run.epoch_top1.push_back(100.0 * static_cast<double>(correct) /
                             static_cast<double>(train.size()));
  }

  NoGradScope no_grad;
  for (const auto &ex : train) {
    const Tensor audio = reshape(ex.audio, {1, ex.audio.dim(0), ex.audio.dim(1)});
    const auto o = teacher.forward(audio);
    TeacherPosteriors post;
    post.frame = reshape(softmax(o.frame_logits, 2), {ex.audio.dim(0), n_classes}).detach();
    post.sequence = reshape(softmax(o.sequence_logits, 1), {n_classes}).detach();
    run.posteriors.emplace(ex.clip_id, std::move(post));
  }
  return run;
}

void write_posterior_cache(const std::filesystem::path &dir,
                           const std::map<std::string, TeacherPosteriors> &posteriors) {
  std::filesystem::create_directories(dir);
  for (const auto &[id, post] : posteriors) {
    write_vsrt(dir / (id + ".frame.vsrt"), post.frame);
    write_vsrt(dir / (id + ".seq.vsrt"), post.sequence);
  }
}

TeacherPosteriors read_posteriors(const std::filesystem::path &dir, const std::string &clip_id) {
  TeacherPosteriors post;
  post.frame = read_vsrt(dir / (clip_id + ".frame.vsrt"));
  post.sequence = read_vsrt(dir / (clip_id + ".seq.vsrt"));
  return post;
}

bool has_posteriors(const std::filesystem::path &dir, const std::string &clip_id) {
  return std::filesystem::exists(dir / (clip_id + ".frame.vsrt")) &&
         std::filesystem::exists(dir / (clip_id + ".seq.vsrt"));
}

} // namespace vsr
