// SPDX-License-Identifier: Apache-2.0
/**
 * @file   trainer.hpp
 * @brief  Training loop, evaluation and the five-variant ablation harness.
 *
 * Training batches use a random crop per clip, in-batch mixup and label
 * smoothing; evaluation uses the centre crop with dropout off and no mixup.
 * Everything is a function of the configuration and the seed.
 */
#ifndef VSR_TRAINER_HPP
#define VSR_TRAINER_HPP

#include <vsr/distill.hpp>
#include <vsr/network.hpp>
#include <vsr/optim.hpp>
#include <vsr/synth.hpp>

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vsr {

enum class Variant { baseline, kd, attention, alignment, integrated };

struct VariantFlags {
  bool kd = false;
  bool attention = false;
  bool alignment = false;
};

/// Row order of the ablation table.
inline constexpr std::array<Variant, 5> kAblationVariants{
    Variant::baseline, Variant::kd, Variant::attention, Variant::alignment,
    Variant::integrated};

VariantFlags variant_flags(Variant v);
std::string_view variant_tag(Variant v);   // "baseline", "kd", ...
std::string_view variant_label(Variant v); // "Baseline + KD", ...
Variant parse_variant(std::string_view tag);

struct PreprocessConfig {
  int resize = 28; // alignment / resize target before cropping
  int crop = 24;
  bool word_boundary = true;
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 8;
  double lr0 = 3e-4;
  double lr_min = 0.0;
  AdamConfig adam;
  double mixup_alpha = 0.2;
  double label_smoothing = 0.1;
  double train_fraction = 1.0;
  std::uint64_t seed = 1;
  Variant variant = Variant::baseline;
  /// Wall-clock seconds in the metrics file. Off by default: the column is
  /// then 0 and two runs of one config produce identical bytes.
  bool record_seconds = false;

  void validate() const;
};

struct MetricsRow {
  std::string variant;
  int epoch = 0;
  double train_loss = 0.0;
  double val_top1 = 0.0;
  double seconds = 0.0;
};

struct TrainSetup {
  ModelConfig model;
  PreprocessConfig prep;
  TrainConfig train;
  KDConfig kd;
};

/// Network configuration for a variant over a given corpus.
ModelConfig model_for(const TrainSetup &setup, const GeneratorConfig &gen);

/// A clip after the per-clip deterministic steps (alignment or resize).
struct PreparedClip {
  std::string clip_id;
  int label = 0;
  Clip frames;
  BoundaryInterval boundary;
  const TeacherPosteriors *teacher = nullptr;
};

std::vector<PreparedClip> prepare_clips(const std::vector<VideoClip> &clips, bool align,
                                        int resize);

/// [B x T x (1 + wb) x crop x crop]
Tensor make_batch(std::span<const PreparedClip *const> clips, const PreprocessConfig &prep,
                  CropMode mode, Rng *rng);

double top1_percent(std::span<const int> predicted, std::span<const int> labels);
std::vector<int> predict(const LipReadingNet &net, std::span<const PreparedClip> clips,
                         const PreprocessConfig &prep);
/// Centre crop, evaluation mode.
double evaluate(const LipReadingNet &net, std::span<const PreparedClip> clips,
                const PreprocessConfig &prep);

using PosteriorMap = std::map<std::string, TeacherPosteriors>;

struct TrainResult {
  std::unique_ptr<LipReadingNet> model;
  std::vector<MetricsRow> metrics;
  ModelConfig model_config;
};

/// `teacher` is required when the variant uses distillation.
TrainResult train(const TrainSetup &setup, const Dataset &data,
                  const PosteriorMap *teacher = nullptr);

/// Trains every variant with the same seed; one summary row (last epoch) per
/// variant, in table order.
std::vector<MetricsRow> ablation_run(const TrainSetup &base, const Dataset &data,
                                     const PosteriorMap *teacher);

std::string metrics_csv(std::span<const MetricsRow> rows);
void write_metrics_csv(const std::filesystem::path &path, std::span<const MetricsRow> rows);

} // namespace vsr

#endif // VSR_TRAINER_HPP
