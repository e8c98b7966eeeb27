// SPDX-License-Identifier: Apache-2.0
#include <vsr/augment.hpp>
#include <vsr/io.hpp>
#include <vsr/trainer.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numeric>

namespace vsr {

namespace {
constexpr std::size_t kEvalBatch = 16;
} // namespace

VariantFlags variant_flags(Variant v) {
  switch (v) {
  case Variant::baseline:
    return {};
  case Variant::kd:
    return {true, false, false};
  case Variant::attention:
    return {false, true, false};
  case Variant::alignment:
    return {false, false, true};
  case Variant::integrated:
    return {true, true, true};
  }
  return {};
}

std::string_view variant_tag(Variant v) {
  switch (v) {
  case Variant::baseline:
    return "baseline";
  case Variant::kd:
    return "kd";
  case Variant::attention:
    return "attention";
  case Variant::alignment:
    return "alignment";
  case Variant::integrated:
    return "integrated";
  }
  return "baseline";
}

std::string_view variant_label(Variant v) {
  switch (v) {
  case Variant::baseline:
    return "Baseline";
  case Variant::kd:
    return "Baseline + KD";
  case Variant::attention:
    return "Baseline + Attention";
  case Variant::alignment:
    return "Baseline + Alignment";
  case Variant::integrated:
    return "Baseline + KD + Alignment + Attention";
  }
  return "Baseline";
}

Variant parse_variant(std::string_view tag) {
  for (Variant v : kAblationVariants)
    if (variant_tag(v) == tag)
      return v;
  throw std::invalid_argument("unknown variant '" + std::string(tag) +
                              "' (expected baseline, kd, attention, alignment, integrated)");
}

void TrainConfig::validate() const {
  if (epochs < 1)
    throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1)
    throw std::invalid_argument("batch_size must be >= 1");
  if (!(lr_min >= 0.0 && (lr0 > lr_min || lr0 == 0.0)))
    throw std::invalid_argument("learning rates must satisfy lr0 > lr_min >= 0");
  if (mixup_alpha < 0.0)
    throw std::invalid_argument("mixup_alpha must be >= 0");
  if (!(label_smoothing >= 0.0 && label_smoothing <= 1.0))
    throw std::invalid_argument("label_smoothing must be in [0, 1]");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0))
    throw std::invalid_argument("train_fraction must be in (0, 1]");
}

ModelConfig model_for(const TrainSetup &setup, const GeneratorConfig &gen) {
  const VariantFlags f = variant_flags(setup.train.variant);
  ModelConfig m = setup.model;
  m.n_classes = gen.n_classes;
  m.frames = gen.frames;
  m.frame_size = setup.prep.crop;
  m.word_boundary = setup.prep.word_boundary;
  m.attention = f.attention;
  m.frame_head = f.kd;
  return m;
}

std::vector<PreparedClip> prepare_clips(const std::vector<VideoClip> &clips, bool align,
                                        int resize_to) {
  const NeutralTemplate tmpl = NeutralTemplate::for_size(resize_to);
  std::vector<PreparedClip> out;
  out.reserve(clips.size());
  for (const VideoClip &c : clips) {
    PreparedClip p;
    p.clip_id = c.clip_id;
    p.label = c.label;
    p.boundary = c.boundary;
    for (std::size_t t = 0; t < c.frames.size(); ++t)
      p.frames.push_back(align ? align_lips(c.frames[t], c.landmarks[t], tmpl, resize_to)
                               : resize(c.frames[t], resize_to, resize_to));
    out.push_back(std::move(p));
  }
  return out;
}

Tensor make_batch(std::span<const PreparedClip *const> clips, const PreprocessConfig &prep,
                  CropMode mode, Rng *rng) {
  if (clips.empty())
    throw std::invalid_argument("empty batch");
  std::vector<Tensor> items;
  items.reserve(clips.size());
  for (const PreparedClip *c : clips) {
    const CropResult crop = resize_crop(c->frames, prep.resize, prep.crop, mode, rng);
    const Index t = static_cast<Index>(crop.frames.size());
    const Index side = prep.crop;
    Array a(t * side * side);
    for (Index k = 0; k < t; ++k)
      a.segment(k * side * side, side * side) =
          Eigen::Map<const Array>(crop.frames[k].data(), side * side);
    Tensor x({t, 1, side, side}, std::move(a));
    if (prep.word_boundary)
      x = append_word_boundary(x, c->boundary);
    items.push_back(std::move(x));
  }
  NoGradScope no_grad;
  return stack(items, 0);
}

double top1_percent(std::span<const int> predicted, std::span<const int> labels) {
  if (labels.empty() || predicted.size() != labels.size())
    throw std::invalid_argument("top1: empty or mismatched prediction set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    hits += predicted[i] == labels[i];
  return 100.0 * static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::vector<int> predict(const LipReadingNet &net, std::span<const PreparedClip> clips,
                         const PreprocessConfig &prep) {
  EvalScope eval;
  NoGradScope no_grad;
  std::vector<int> out;
  const Index v = net.config().n_classes;
  for (std::size_t s = 0; s < clips.size(); s += kEvalBatch) {
    std::vector<const PreparedClip *> batch;
    for (std::size_t i = s; i < std::min(clips.size(), s + kEvalBatch); ++i)
      batch.push_back(&clips[i]);
    const NetworkOutput o = net.forward(make_batch(batch, prep, CropMode::center, nullptr));
    for (std::size_t k = 0; k < batch.size(); ++k) {
      Index arg = 0;
      o.sequence_logits.data().segment(static_cast<Index>(k) * v, v).maxCoeff(&arg);
      out.push_back(static_cast<int>(arg));
    }
  }
  return out;
}

double evaluate(const LipReadingNet &net, std::span<const PreparedClip> clips,
                const PreprocessConfig &prep) {
  if (clips.empty())
    throw std::invalid_argument("evaluation set is empty");
  std::vector<int> labels;
  for (const PreparedClip &c : clips)
    labels.push_back(c.label);
  return top1_percent(predict(net, clips, prep), labels);
}

namespace {

std::vector<std::size_t> subsample(const std::vector<VideoClip> &clips, double fraction,
                                   int n_classes, std::uint64_t seed) {
  std::vector<std::size_t> keep;
  if (fraction >= 1.0) {
    keep.resize(clips.size());
    std::iota(keep.begin(), keep.end(), 0);
    return keep;
  }
  Rng rng(derive_seed(seed, "subsample"));
  for (int c = 0; c < n_classes; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < clips.size(); ++i)
      if (clips[i].label == c)
        idx.push_back(i);
    if (idx.empty())
      continue;
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(fraction * static_cast<double>(idx.size()))));
    keep.insert(keep.end(), idx.begin(), idx.begin() + std::min(n, idx.size()));
  }
  std::sort(keep.begin(), keep.end());
  return keep;
}

Tensor stack_teacher(std::span<const PreparedClip *const> batch, std::span<const int> order,
                     bool frame) {
  std::vector<Tensor> rows;
  for (int i : order) {
    const TeacherPosteriors *t = batch[static_cast<std::size_t>(i)]->teacher;
    rows.push_back(frame ? t->frame : t->sequence);
  }
  NoGradScope no_grad;
  return stack(rows, 0);
}

} // namespace

TrainResult train(const TrainSetup &setup, const Dataset &data, const PosteriorMap *teacher) {
  const TrainConfig &tc = setup.train;
  tc.validate();
  setup.kd.validate();
  if (data.train.empty() || data.val.empty())
    throw std::invalid_argument("training and validation splits must be non-empty");
  const VariantFlags flags = variant_flags(tc.variant);

  TrainResult result;
  result.model_config = model_for(setup, data.gen);
  result.model = std::make_unique<LipReadingNet>(result.model_config,
                                                 derive_seed(tc.seed, "model"));
  LipReadingNet &net = *result.model;

  const auto keep = subsample(data.train, tc.train_fraction, data.gen.n_classes, tc.seed);
  std::vector<VideoClip> train_clips;
  for (std::size_t i : keep)
    train_clips.push_back(data.train[i]);
  std::vector<PreparedClip> train_set = prepare_clips(train_clips, flags.alignment, setup.prep.resize);
  const std::vector<PreparedClip> val_set =
      prepare_clips(data.val, flags.alignment, setup.prep.resize);
  if (flags.kd) {
    if (teacher == nullptr)
      throw std::invalid_argument("variant '" + std::string(variant_tag(tc.variant)) +
                                  "' needs a teacher posterior cache");
    for (PreparedClip &c : train_set) {
      auto it = teacher->find(c.clip_id);
      if (it == teacher->end())
        throw std::invalid_argument("teacher cache has no posteriors for clip " + c.clip_id);
      c.teacher = &it->second;
    }
  }

  Rng shuffle_rng(derive_seed(tc.seed, "shuffle"));
  Rng crop_rng(derive_seed(tc.seed, "crop"));
  Rng mix_rng(derive_seed(tc.seed, "mixup"));
  Rng dropout_rng(derive_seed(tc.seed, "dropout"));

  Adam adam(net.parameters(), tc.adam);
  const auto bs = static_cast<std::size_t>(tc.batch_size);
  const long steps_per_epoch = static_cast<long>((train_set.size() + bs - 1) / bs);
  const long total_steps = steps_per_epoch * tc.epochs;
  long step = 0;
  const auto started = std::chrono::steady_clock::now();
  // Unmixed centre-crop batches for re-estimating the norm statistics.
  std::vector<Tensor> calibration;
  for (std::size_t s = 0; s < train_set.size(); s += kEvalBatch) {
    std::vector<const PreparedClip *> batch;
    for (std::size_t i = s; i < std::min(train_set.size(), s + kEvalBatch); ++i)
      batch.push_back(&train_set[i]);
    calibration.push_back(make_batch(batch, setup.prep, CropMode::center, nullptr));
  }
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    long batches = 0;
    for (std::size_t s = 0; s < order.size(); s += bs) {
      std::vector<const PreparedClip *> batch;
      std::vector<int> labels;
      for (std::size_t i = s; i < std::min(order.size(), s + bs); ++i) {
        batch.push_back(&train_set[order[i]]);
        labels.push_back(train_set[order[i]].label);
      }
      const Tensor x = make_batch(batch, setup.prep, CropMode::random, &crop_rng);
      MixedBatch mixed;
      if (tc.mixup_alpha > 0.0) {
        mixed = mixup_batch(x, labels, tc.mixup_alpha, mix_rng);
      } else {
        mixed.lambda = 1.0;
        mixed.x_mixed = x;
        mixed.y_a = mixed.y_b = labels;
        mixed.perm.resize(labels.size());
        std::iota(mixed.perm.begin(), mixed.perm.end(), 0);
      }
      const double lam = mixed.lambda;

      adam.zero_grad();
      const NetworkOutput out = net.forward(mixed.x_mixed, &dropout_rng);
      const Tensor ce = mixup_loss(out.sequence_logits, mixed.y_a, mixed.y_b, lam,
                                   tc.label_smoothing);
      Tensor seq_kd, frame_kd;
      if (flags.kd) {
        std::vector<int> ident(batch.size());
        std::iota(ident.begin(), ident.end(), 0);
        const double tau = setup.kd.temperature;
        seq_kd = scale(sequence_kd_loss(out.sequence_logits, stack_teacher(batch, ident, false), tau), lam);
        frame_kd = scale(frame_kd_loss(out.frame_logits, stack_teacher(batch, ident, true), tau), lam);
        if (lam < 1.0) {
          seq_kd = add(seq_kd, scale(sequence_kd_loss(out.sequence_logits,
                                                      stack_teacher(batch, mixed.perm, false), tau),
                                     1.0 - lam));
          frame_kd = add(frame_kd, scale(frame_kd_loss(out.frame_logits,
                                                       stack_teacher(batch, mixed.perm, true), tau),
                                         1.0 - lam));
        }
      }
      const Tensor loss = combined_loss(ce, seq_kd, frame_kd, setup.kd);
      backward(loss);
      adam.step(cosine_lr(step, total_steps, tc.lr0, tc.lr_min));
      ++step;
      loss_sum += loss.item();
      ++batches;
    }
    adam.zero_grad();
    net.recalibrate_norms(calibration);
    MetricsRow row;
    row.variant = std::string(variant_tag(tc.variant));
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(batches);
    row.val_top1 = evaluate(net, val_set, setup.prep);
    if (tc.record_seconds)
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.metrics.push_back(row);
  }
  return result;
}

std::vector<MetricsRow> ablation_run(const TrainSetup &base, const Dataset &data,
                                     const PosteriorMap *teacher) {
  for (Variant v : kAblationVariants)
    if (variant_flags(v).kd && teacher == nullptr)
      throw std::invalid_argument("ablation needs the teacher posterior cache for its KD variants");
  std::vector<MetricsRow> rows;
  for (Variant v : kAblationVariants) {
    TrainSetup s = base;
    s.train.variant = v;
    TrainResult r = train(s, data, teacher);
    MetricsRow last = r.metrics.back();
    last.variant = std::string(variant_label(v));
    rows.push_back(last);
  }
  return rows;
}

std::string metrics_csv(std::span<const MetricsRow> rows) {
  std::string out = "variant,epoch,train_loss,val_top1,seconds\n";
  char buf[256];
  for (const MetricsRow &r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%d,%.17g,%.17g,%.3f\n", r.variant.c_str(), r.epoch,
                  r.train_loss, r.val_top1, r.seconds);
    out += buf;
  }
  return out;
}

void write_metrics_csv(const std::filesystem::path &path, std::span<const MetricsRow> rows) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  write_file_atomic(path, metrics_csv(rows));
}

} // namespace vsr
