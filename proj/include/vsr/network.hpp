// SPDX-License-Identifier: Apache-2.0
/**
 * @file   network.hpp
 * @brief  SE-ResNet frontend, optional spatio-temporal attention, BiGRU
 *         backend and the sequence / per-frame classifier heads.
 *
 * Frames are processed independently by 2-D convolutions: stem conv3x3/2,
 * then one SE block per stage width, each with stride 2 (88 -> 44 -> 22 -> 11
 * for an 88x88 crop, 24 -> 12 -> 6 -> 3 for the desk default).
 */
#ifndef VSR_NETWORK_HPP
#define VSR_NETWORK_HPP

#include <vsr/attention.hpp>
#include <vsr/layers.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vsr {

struct ModelConfig {
  int n_classes = 10;
  int frames = 12;
  int frame_size = 24; // network input side, after cropping
  int stem_width = 8;
  std::vector<int> stage_widths{16, 32};
  int se_reduction = 4;
  int gru_hidden = 32;
  int gru_layers = 3;
  double dropout = 0.2;
  bool attention = false;
  int attention_kernel = 1;
  bool word_boundary = true;
  bool frame_head = false;

  int in_channels() const { return word_boundary ? 2 : 1; }
  int feature_channels() const { return stage_widths.back(); }
  /// Side of the frontend output map.
  int feature_size() const;
  void validate() const;
};

struct NetworkOutput {
  Tensor sequence_logits; // [B x V]
  Tensor frame_logits;    // [B x T x V]; undefined without the frame head
  std::optional<AttentionBundle> attention;
};

class LipReadingNet {
public:
  LipReadingNet(const ModelConfig &cfg, std::uint64_t seed);

  const ModelConfig &config() const { return cfg_; }

  /// [B x T x C x H x W] -> frame-level feature map [B*T x C' x h x w].
  Tensor frontend(const Tensor &clips) const;
  /// Per-frame feature vectors [B*T x C'] (attention fusion or plain pooling).
  Tensor frame_features(const Tensor &feature_map, const Tensor *keep,
                        std::optional<AttentionBundle> *bundle) const;
  Tensor backend(const Tensor &seq, Rng *dropout_rng) const;
  NetworkOutput classify(const Tensor &seq_features) const;

  /// `keep` [B*T] of 0/1 zeroes the temporal score and spatial maps of
  /// dropped frames (attention models only).
  NetworkOutput forward(const Tensor &clips, Rng *dropout_rng = nullptr,
                        const Tensor *keep = nullptr) const;

  /// Trainable tensors.
  ParamList parameters() const;
  /// Batch-norm running statistics.
  ParamList buffers() const;
  /// parameters() then buffers(); what checkpoints hold.
  ParamList state() const;
  /// Every batch-norm layer, stem first.
  std::vector<BatchNorm *> norm_layers();
  /// Re-estimates the running statistics as the exact average of the batch
  /// statistics over `batches` (frontend passes in training mode, no graph).
  void recalibrate_norms(std::span<const Tensor> batches);
  Index parameter_count() const { return count_parameters(parameters()); }

  Conv2d stem;
  BatchNorm stem_norm;
  std::vector<SEBlock> stages;
  std::optional<SpatioTemporalAttention> attention;
  BiGRU gru;
  Linear head;
  std::optional<Linear> frame_head;

private:
  ModelConfig cfg_;
};

/// Directory of `<name>.vsrt` tensors, `manifest.txt` (name and shape per
/// line) and `config.txt`.
void save_checkpoint(const std::filesystem::path &dir, const ParamList &params,
                     const std::string &config_text);
/// Loads tensors by name into `params`; shapes must agree.
void load_checkpoint(const std::filesystem::path &dir, const ParamList &params);

} // namespace vsr

#endif // VSR_NETWORK_HPP
