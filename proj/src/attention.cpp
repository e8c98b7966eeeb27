// SPDX-License-Identifier: Apache-2.0
#include <vsr/attention.hpp>

namespace vsr {

Tensor apply_temporal_weights(const Tensor &g, const Tensor &scores) {
  if (g.rank() != 2 || scores.size() != g.dim(0))
    throw ShapeError("temporal weights " + to_string(scores.shape()) + " vs features " +
                     to_string(g.shape()));
  return mul(expand(reshape(scores, {g.dim(0), 1}), g.shape()), g);
}

Tensor fuse_attention(std::span<const Tensor> spatial_feats, const Tensor &weighted_temporal) {
  if (spatial_feats.empty())
    throw ShapeError("fuse_attention: no spatial hops");
  Tensor fused;
  for (const Tensor &s : spatial_feats) {
    if (s.shape() != weighted_temporal.shape())
      throw ShapeError("fuse_attention: hop " + to_string(s.shape()) + " vs temporal " +
                       to_string(weighted_temporal.shape()));
    const Tensor term = add(s, weighted_temporal);
    fused = fused.defined() ? add(fused, term) : term;
  }
  return fused;
}

SpatioTemporalAttention::SpatioTemporalAttention(Index channels, int kernel, Rng &rng) {
  for (auto &hop : hops)
    hop = Conv2d(channels, 1, kernel, 1, kernel / 2, rng);
  temporal_fc = Linear(channels, 1, rng);
}

SpatioTemporalAttention::SpatialResult
SpatioTemporalAttention::spatial(const Tensor &f, const Tensor *keep) const {
  if (f.rank() != 4)
    throw ShapeError("spatial attention expects [N x C x h x w]");
  const Index n = f.dim(0);
  SpatialResult out;
  for (int k = 0; k < kAttentionHops; ++k) {
    Tensor map = sigmoid(hops[k].forward(f));
    if (keep != nullptr)
      map = mul(map, expand(reshape(*keep, {n, 1, 1, 1}), map.shape()));
    out.maps[k] = map;
    out.feats[k] = mean(mul(expand(map, f.shape()), f), {2, 3});
  }
  return out;
}

SpatioTemporalAttention::TemporalResult
SpatioTemporalAttention::temporal(const Tensor &g, const Tensor *keep) const {
  Tensor scores = reshape(sigmoid(temporal_fc.forward(g)), {g.dim(0)});
  if (keep != nullptr)
    scores = mul(scores, *keep);
  return {scores, apply_temporal_weights(g, scores)};
}

AttentionBundle SpatioTemporalAttention::forward(const Tensor &f, const Tensor *keep) const {
  AttentionBundle b;
  auto sp = spatial(f, keep);
  auto tp = temporal(squeeze(f), keep);
  b.spatial_maps = sp.maps;
  b.spatial_feats = sp.feats;
  b.temporal_scores = tp.scores;
  b.weighted_temporal = tp.weighted;
  b.fused = fuse_attention(b.spatial_feats, b.weighted_temporal);
  return b;
}

void SpatioTemporalAttention::collect(const std::string &prefix, ParamList &out) const {
  for (int k = 0; k < kAttentionHops; ++k)
    hops[k].collect(prefix + ".hop" + std::to_string(k), out);
  temporal_fc.collect(prefix + ".temporal", out);
}

} // namespace vsr
