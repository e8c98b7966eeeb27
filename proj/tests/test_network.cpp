// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <vsr/network.hpp>

#include <cmath>
#include <filesystem>

using namespace vsr;

namespace {

Tensor random_tensor(Shape shape, Rng &rng, double lo = -1.0, double hi = 1.0) {
  Array v(numel(shape));
  for (Index i = 0; i < v.size(); ++i)
    v[i] = uniform(rng, lo, hi);
  return Tensor(std::move(shape), v);
}

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.n_classes = 5;
  cfg.frames = 4;
  cfg.frame_size = 16;
  cfg.stem_width = 4;
  cfg.stage_widths = {8, 8};
  cfg.gru_hidden = 6;
  cfg.gru_layers = 2;
  return cfg;
}

double sigmoid_d(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Reference GRU cell written directly from the recurrence, gate order z | r | n.
Eigen::VectorXd gru_cell(const GRUDirection &g, const Eigen::VectorXd &x, const Eigen::VectorXd &h) {
  const Index H = g.hidden, D = x.size();
  auto wx = [&](Index i, Index j) { return g.w_x.data()[i * 3 * H + j]; };
  auto uzr = [&](Index i, Index j) { return g.u_zr.data()[i * 2 * H + j]; };
  auto un = [&](Index i, Index j) { return g.u_n.data()[i * H + j]; };
  Eigen::VectorXd z(H), r(H), out(H);
  for (Index j = 0; j < H; ++j) {
    double az = g.bias.data()[j], ar = g.bias.data()[H + j];
    for (Index i = 0; i < D; ++i) {
      az += x[i] * wx(i, j);
      ar += x[i] * wx(i, H + j);
    }
    for (Index i = 0; i < H; ++i) {
      az += h[i] * uzr(i, j);
      ar += h[i] * uzr(i, H + j);
    }
    z[j] = sigmoid_d(az);
    r[j] = sigmoid_d(ar);
  }
  for (Index j = 0; j < H; ++j) {
    double an = g.bias.data()[2 * H + j];
    for (Index i = 0; i < D; ++i)
      an += x[i] * wx(i, 2 * H + j);
    for (Index i = 0; i < H; ++i)
      an += r[i] * h[i] * un(i, j);
    const double n = std::tanh(an);
    out[j] = (1.0 - z[j]) * n + z[j] * h[j];
  }
  return out;
}

} // namespace

TEST_CASE("SE block") {
  Rng rng(1);
  SEBlock block(4, 8, 2, 4, rng);
  const Tensor x = random_tensor({3, 4, 6, 6}, rng);
  const Tensor y = block.forward(x);
  CHECK(y.shape() == Shape{3, 8, 3, 3});

  SUBCASE("squeeze of a constant map") {
    Array v(2 * 3 * 4 * 4);
    for (Index c = 0; c < 6; ++c)
      v.segment(c * 16, 16).setConstant(0.5 + c);
    const Tensor s = squeeze(Tensor({2, 3, 4, 4}, v));
    CHECK(s.shape() == Shape{2, 3});
    for (Index c = 0; c < 6; ++c)
      CHECK(s[c] == 0.5 + c);
  }
  SUBCASE("half excitation halves the branch") {
    block.fc2.weight.data().setZero();
    block.fc2.bias.data().setZero();
    const Tensor branch =
        block.norm2.forward(block.conv2.forward(relu(block.norm1.forward(block.conv1.forward(x)))));
    CHECK((block.excitation(branch).data() == 0.5).all());
    const Tensor residual = block.shortcut_norm->forward(block.shortcut->forward(x));
    const Array expected = (0.5 * branch.data() + residual.data()).max(0.0);
    CHECK((block.forward(x).data() - expected).abs().maxCoeff() < 1e-15);
  }
  SUBCASE("excitation stays inside (0, 1)") {
    const Tensor s = block.excitation(random_tensor({3, 8, 3, 3}, rng, -4, 4));
    CHECK(s.data().minCoeff() > 0.0);
    CHECK(s.data().maxCoeff() < 1.0);
  }
  CHECK_THROWS_AS(SEBlock(4, 6, 1, 4, rng), std::invalid_argument);
}

TEST_CASE("frontend shapes") {
  ModelConfig cfg;
  cfg.frame_size = 88;
  CHECK(cfg.feature_size() == 11);
  ModelConfig desk;
  CHECK(desk.feature_size() == 3);

  cfg.frames = 2;
  LipReadingNet net(cfg, 1);
  EvalScope eval;
  const Tensor f = net.frontend(Tensor({1, 2, 2, 88, 88}, 0.3));
  CHECK(f.shape() == Shape{2, 32, 11, 11});
  CHECK_THROWS_AS(net.frontend(Tensor({1, 2, 1, 88, 88}, 0.3)), ShapeError);
}

TEST_CASE("zero input gives zero features") {
  const ModelConfig cfg = small_config();
  LipReadingNet net(cfg, 2);
  for (const NamedParam &p : net.parameters())
    if (p.name.ends_with(".bias") || p.name.ends_with(".beta"))
      Tensor(p.tensor).data().setZero();
  EvalScope eval;
  const Tensor f = net.frontend(Tensor({2, 4, 2, 16, 16}, 0.0));
  CHECK(f.data().abs().maxCoeff() == 0.0);
}

TEST_CASE("clips in a batch do not interact") {
  ModelConfig cfg = small_config();
  cfg.attention = true;
  cfg.frame_head = true;
  LipReadingNet net(cfg, 3);
  Rng rng(3);
  const Tensor clip = random_tensor({1, 4, 2, 16, 16}, rng, 0, 1);
  const Tensor parts[] = {clip, clip};
  const Tensor pair = concat(parts, 0);
  EvalScope eval;
  const NetworkOutput one = net.forward(clip);
  const NetworkOutput two = net.forward(pair);
  const Index v = cfg.n_classes;
  for (Index k = 0; k < v; ++k) {
    CHECK(two.sequence_logits[k] == one.sequence_logits[k]);
    CHECK(two.sequence_logits[v + k] == one.sequence_logits[k]);
  }
  const Index per_clip = cfg.frames * v;
  CHECK((two.frame_logits.data().head(per_clip) == one.frame_logits.data()).all());
  CHECK((two.frame_logits.data().tail(per_clip) == one.frame_logits.data()).all());
}

TEST_CASE("GRU") {
  Rng rng(4);
  SUBCASE("single step matches the reference cell in both directions") {
    BiGRU gru(3, 4, 1, 0.0, rng);
    const Tensor x = random_tensor({1, 1, 3}, rng);
    const Tensor out = gru.forward(x, nullptr);
    CHECK(out.shape() == Shape{1, 1, 8});
    const Eigen::VectorXd xv = Eigen::Map<const Eigen::VectorXd>(x.data().data(), 3);
    const Eigen::VectorXd h0 = Eigen::VectorXd::Zero(4);
    const Eigen::VectorXd f = gru_cell(gru.fwd[0], xv, h0);
    const Eigen::VectorXd b = gru_cell(gru.bwd[0], xv, h0);
    for (Index j = 0; j < 4; ++j) {
      CHECK(std::abs(out[j] - f[j]) < 1e-14);
      CHECK(std::abs(out[4 + j] - b[j]) < 1e-14);
    }
  }
  SUBCASE("multi-step forward direction matches the reference recurrence") {
    GRUDirection dir(3, 5, rng);
    const Tensor x = random_tensor({1, 6, 3}, rng);
    const auto states = dir.run(x, false);
    Eigen::VectorXd h = Eigen::VectorXd::Zero(5);
    for (Index t = 0; t < 6; ++t) {
      h = gru_cell(dir, Eigen::Map<const Eigen::VectorXd>(x.data().data() + t * 3, 3), h);
      for (Index j = 0; j < 5; ++j)
        CHECK(std::abs(states[static_cast<std::size_t>(t)][j] - h[j]) < 1e-13);
    }
  }
  SUBCASE("forward direction is causal") {
    BiGRU gru(3, 4, 3, 0.0, rng);
    const Tensor x = random_tensor({2, 7, 3}, rng);
    const Tensor base = gru.forward(x, nullptr);
    CHECK(base.shape() == Shape{2, 7, 8});
    Tensor moved = x.detach();
    for (Index b = 0; b < 2; ++b)
      for (Index t = 4; t < 7; ++t)
        for (Index d = 0; d < 3; ++d)
          moved.data()[(b * 7 + t) * 3 + d] += uniform(rng, -2, 2);
    const Tensor out = gru.forward(moved, nullptr);
    // Only the first layer's forward half is strictly causal once layers stack
    // bidirectionally, so check with a single layer as well.
    BiGRU single(3, 4, 1, 0.0, rng);
    const Tensor s0 = single.forward(x, nullptr), s1 = single.forward(moved, nullptr);
    for (Index b = 0; b < 2; ++b)
      for (Index t = 0; t < 4; ++t)
        for (Index j = 0; j < 4; ++j)
          CHECK(s0[(b * 7 + t) * 8 + j] == s1[(b * 7 + t) * 8 + j]);
    CHECK((out.data() - base.data()).abs().maxCoeff() > 0.0);
  }
  SUBCASE("update-gate bias starts at one") {
    GRUDirection dir(3, 4, rng);
    CHECK((dir.bias.data().head(4) == 1.0).all());
    CHECK((dir.bias.data().tail(8) == 0.0).all());
  }
}

TEST_CASE("classify") {
  ModelConfig cfg = small_config();
  cfg.frame_head = true;
  LipReadingNet net(cfg, 5);
  Rng rng(5);
  const Tensor row = random_tensor({1, 1, 12}, rng);
  const Tensor rows[] = {row, row, row};
  const NetworkOutput out = net.classify(concat(rows, 1));
  CHECK(out.sequence_logits.shape() == Shape{1, 5});
  CHECK(std::abs(softmax(out.sequence_logits).data().sum() - 1.0) < 1e-12);
  for (Index t = 1; t < 3; ++t)
    for (Index k = 0; k < 5; ++k)
      CHECK(out.frame_logits[t * 5 + k] == out.frame_logits[k]);

  ModelConfig lrw;
  lrw.n_classes = 500;
  LipReadingNet big(lrw, 1);
  CHECK(big.head.bias.size() == 500);
}

TEST_CASE("parameter count of the desk model") {
  const ModelConfig cfg;
  const LipReadingNet net(cfg, 1);
  // Independent tally of every learned tensor.
  const Index in = cfg.in_channels(), stem = cfg.stem_width, h = cfg.gru_hidden;
  Index expected = in * stem * 9 + 2 * stem;
  Index prev = stem;
  for (int w : cfg.stage_widths) {
    const Index r = w / cfg.se_reduction;
    expected += prev * w * 9 + w * w * 9 + 4 * w + prev * w + 2 * w + w * r + r + r * w + w;
    prev = w;
  }
  for (int l = 0; l < cfg.gru_layers; ++l) {
    const Index d = l == 0 ? prev : 2 * h;
    expected += 2 * (d * 3 * h + 3 * h * h + 3 * h);
  }
  expected += 2 * h * cfg.n_classes + cfg.n_classes;
  CHECK(net.parameter_count() == expected);
  CHECK(net.parameter_count() == 69446);
  CHECK(LipReadingNet(cfg, 2).parameter_count() == 69446);
}

TEST_CASE("evaluation mode is deterministic") {
  ModelConfig cfg = small_config();
  cfg.attention = true;
  cfg.dropout = 0.3;
  LipReadingNet net(cfg, 6);
  Rng rng(6);
  const Tensor clips = random_tensor({2, 4, 2, 16, 16}, rng, 0, 1);
  EvalScope eval;
  const Array a = net.forward(clips).sequence_logits.data();
  const Array b = net.forward(clips).sequence_logits.data();
  CHECK((a == b).all());
}

TEST_CASE("baseline has no attention parameters") {
  ModelConfig cfg;
  LipReadingNet base(cfg, 1);
  for (const NamedParam &p : base.state())
    CHECK(p.name.find("attention") == std::string::npos);
  cfg.attention = true;
  LipReadingNet att(cfg, 1);
  Index n = 0;
  for (const NamedParam &p : att.parameters())
    n += p.name.starts_with("attention") ? 1 : 0;
  CHECK(n == 8);
}

TEST_CASE("checkpoint round trip") {
  ModelConfig cfg = small_config();
  LipReadingNet a(cfg, 7), b(cfg, 8);
  a.stem_norm.running_mean.data().setConstant(0.125);
  const auto dir = std::filesystem::temp_directory_path() / "vsr_ckpt_test";
  std::filesystem::remove_all(dir);
  save_checkpoint(dir, a.state(), "model = small\n");
  CHECK(std::filesystem::exists(dir / "manifest.txt"));
  CHECK(std::filesystem::exists(dir / "config.txt"));
  load_checkpoint(dir, b.state());
  const ParamList sa = a.state(), sb = b.state();
  REQUIRE(sa.size() == sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i)
    CHECK((sa[i].tensor.data() == sb[i].tensor.data()).all());

  ModelConfig other = cfg;
  other.gru_hidden = 7;
  LipReadingNet c(other, 1);
  CHECK_THROWS_AS(load_checkpoint(dir, c.state()), ShapeError);
  std::filesystem::remove_all(dir);
}
