// SPDX-License-Identifier: Apache-2.0
/**
 * @file   attention.hpp
 * @brief  Three-hop spatial attention, per-frame temporal attention, fusion.
 *
 * Input is a frame-level feature map f [N x C x h x w] with N = batch * frames.
 *   hop k:    A_k = sigmoid(conv_k(f))            [N x 1 x h x w]
 *             s_k = spatial mean of A_k * f         [N x C]
 *   temporal: g   = spatial mean of f              [N x C]
 *             a   = sigmoid(g w + b)                [N]
 *             u   = a * g                           [N x C]
 *   fused = sum_k (s_k + u) = sum_k s_k + 3 u
 */
#ifndef VSR_ATTENTION_HPP
#define VSR_ATTENTION_HPP

#include <vsr/layers.hpp>

#include <array>

namespace vsr {

inline constexpr int kAttentionHops = 3;

struct AttentionBundle {
  std::array<Tensor, kAttentionHops> spatial_maps;  // [N x 1 x h x w]
  std::array<Tensor, kAttentionHops> spatial_feats; // [N x C]
  Tensor temporal_scores;                           // [N]
  Tensor weighted_temporal;                         // [N x C]
  Tensor fused;                                     // [N x C]
};

/// u_t = scores_t * g_t for g [N x C] and scores [N].
Tensor apply_temporal_weights(const Tensor &g, const Tensor &scores);

Tensor fuse_attention(std::span<const Tensor> spatial_feats, const Tensor &weighted_temporal);

class SpatioTemporalAttention {
public:
  SpatioTemporalAttention() = default;
  SpatioTemporalAttention(Index channels, int kernel, Rng &rng);

  struct SpatialResult {
    std::array<Tensor, kAttentionHops> maps;
    std::array<Tensor, kAttentionHops> feats;
  };
  struct TemporalResult {
    Tensor scores;
    Tensor weighted;
  };

  /// `keep` [N] of 0/1, when given, multiplies every hop map of frame n.
  SpatialResult spatial(const Tensor &f, const Tensor *keep = nullptr) const;
  /// `keep` likewise multiplies the temporal score.
  TemporalResult temporal(const Tensor &g, const Tensor *keep = nullptr) const;
  AttentionBundle forward(const Tensor &f, const Tensor *keep = nullptr) const;

  void collect(const std::string &prefix, ParamList &out) const;

  std::array<Conv2d, kAttentionHops> hops;
  Linear temporal_fc;
};

} // namespace vsr

#endif // VSR_ATTENTION_HPP
