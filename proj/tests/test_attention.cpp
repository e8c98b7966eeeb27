// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <vsr/attention.hpp>
#include <vsr/gradcheck.hpp>
#include <vsr/network.hpp>

#include <cmath>

using namespace vsr;

namespace {

Tensor random_map(Shape shape, Rng &rng, double lo = -1.0, double hi = 1.0) {
  Array v(numel(shape));
  for (Index i = 0; i < v.size(); ++i)
    v[i] = uniform(rng, lo, hi);
  return Tensor(std::move(shape), v);
}

void force_hop_bias(SpatioTemporalAttention &att, double b) {
  for (auto &hop : att.hops) {
    hop.weight.data().setZero();
    hop.bias.data().setConstant(b);
  }
}

} // namespace

TEST_CASE("spatial attention saturation") {
  Rng rng(1);
  SpatioTemporalAttention att(5, 1, rng);
  const Tensor f = random_map({3, 5, 4, 4}, rng, 0.0, 2.0);
  const Tensor plain = mean(f, {2, 3});

  force_hop_bias(att, 20.0);
  auto on = att.spatial(f);
  for (int k = 0; k < kAttentionHops; ++k) {
    CHECK(on.maps[k].shape() == Shape{3, 1, 4, 4});
    CHECK(on.feats[k].shape() == Shape{3, 5});
    CHECK((on.feats[k].data() - plain.data()).abs().maxCoeff() < 1e-8);
  }

  force_hop_bias(att, -20.0);
  auto off = att.spatial(f);
  for (int k = 0; k < kAttentionHops; ++k)
    CHECK(off.feats[k].data().abs().maxCoeff() < 1e-8);
}

TEST_CASE("temporal attention weighting") {
  const Tensor g = Tensor::from({2, 2}, {4, 0, 0, 4});
  const Tensor w = apply_temporal_weights(g, Tensor::from({2}, {0.25, 0.75}));
  CHECK((w.data() == Tensor::from({2, 2}, {1, 0, 0, 3}).data()).all());

  const Tensor ones = apply_temporal_weights(g, Tensor({2}, 1.0));
  CHECK((ones.data() == g.data()).all());

  Rng rng(2);
  SpatioTemporalAttention att(4, 1, rng);
  const Tensor g2 = random_map({5, 4}, rng);
  const Tensor keep = Tensor::from({5}, {1, 1, 0, 1, 1});
  const auto r = att.temporal(g2, &keep);
  CHECK(r.scores[2] == 0.0);
  for (Index c = 0; c < 4; ++c)
    CHECK(r.weighted[2 * 4 + c] == 0.0);
}

TEST_CASE("fusion") {
  Rng rng(3);
  const Tensor wt = random_map({4, 6}, rng);
  const Tensor zero({4, 6}, 0.0);
  const std::array<Tensor, 3> zeros{zero, zero, zero};
  const Tensor a = fuse_attention(zeros, wt);
  CHECK(a.shape() == Shape{4, 6});
  CHECK((a.data() - 3.0 * wt.data()).abs().maxCoeff() == 0.0);

  const Tensor s = random_map({4, 6}, rng);
  const std::array<Tensor, 3> same{s, s, s};
  CHECK((fuse_attention(same, zero).data() - 3.0 * s.data()).abs().maxCoeff() < 1e-15);

  SUBCASE("additive in each argument") {
    std::array<Tensor, 3> x, y, xy;
    for (int k = 0; k < 3; ++k) {
      x[k] = random_map({4, 6}, rng);
      y[k] = random_map({4, 6}, rng);
      xy[k] = add(x[k], y[k]);
    }
    const Tensor tx = random_map({4, 6}, rng), ty = random_map({4, 6}, rng);
    const Array lhs = fuse_attention(xy, add(tx, ty)).data();
    const Array rhs = fuse_attention(x, tx).data() + fuse_attention(y, ty).data();
    CHECK((lhs - rhs).abs().maxCoeff() < 1e-12);
  }
  CHECK_THROWS_AS(fuse_attention(same, Tensor({4, 5}, 0.0)), ShapeError);
}

TEST_CASE("attention values stay inside (0, 1)") {
  Rng rng(4);
  SpatioTemporalAttention att(6, 3, rng);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor f = random_map({4, 6, 5, 5}, rng, -3.0, 3.0);
    const AttentionBundle b = att.forward(f);
    for (const Tensor &m : b.spatial_maps) {
      CHECK(m.data().minCoeff() > 0.0);
      CHECK(m.data().maxCoeff() < 1.0);
    }
    CHECK(b.temporal_scores.data().minCoeff() > 0.0);
    CHECK(b.temporal_scores.data().maxCoeff() < 1.0);
    CHECK(b.fused.shape() == Shape{4, 6});
  }
}

TEST_CASE("attention block gradients") {
  Rng rng(5);
  SpatioTemporalAttention att(4, 3, rng);
  Tensor f = random_map({3, 4, 5, 5}, rng);
  f.set_requires_grad(true);
  const Tensor w = random_map({3, 4}, rng);
  ParamList params;
  att.collect("att", params);
  std::vector<Tensor> inputs{f};
  for (auto &p : params)
    inputs.push_back(p.tensor);
  const CheckReport r =
      finite_diff_check([&] { return sum(mul(att.forward(f).fused, w)); }, inputs);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("suppressed frames cannot change the logits") {
  ModelConfig cfg;
  cfg.n_classes = 6;
  cfg.frames = 5;
  cfg.frame_size = 16;
  cfg.stage_widths = {8, 8};
  cfg.gru_hidden = 8;
  cfg.attention = true;
  LipReadingNet net(cfg, 3);
  Rng rng(6);
  const Index per_frame = 2 * 16 * 16;
  Tensor clip = random_map({1, 5, 2, 16, 16}, rng, 0.0, 1.0);
  const Tensor keep = Tensor::from({5}, {1, 1, 0, 1, 1});
  EvalScope eval;
  const Array base = net.forward(clip, nullptr, &keep).sequence_logits.data();
  double worst = 0.0, unsuppressed = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    Tensor moved = clip.detach();
    for (Index k = 0; k < per_frame; ++k)
      moved.data()[2 * per_frame + k] = uniform(rng, -5.0, 5.0);
    const Array out = net.forward(moved, nullptr, &keep).sequence_logits.data();
    worst = std::max(worst, (out - base).abs().maxCoeff());
    const Array free = net.forward(moved).sequence_logits.data();
    unsuppressed = std::max(unsuppressed, (free - net.forward(clip).sequence_logits.data()).abs().maxCoeff());
  }
  CHECK(worst < 1e-9);
  // Without the clamp the same perturbation is visible.
  CHECK(unsuppressed > 1e-6);
}
