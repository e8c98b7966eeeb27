// SPDX-License-Identifier: Apache-2.0
#include <vsr/io.hpp>
#include <vsr/network.hpp>

#include <fstream>
#include <sstream>

namespace vsr {

int ModelConfig::feature_size() const {
  int s = frame_size;
  for (std::size_t i = 0; i <= stage_widths.size(); ++i)
    s = (s + 2 - 3) / 2 + 1; // 3x3, stride 2, pad 1
  return s;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string &m) { throw std::invalid_argument("model config: " + m); };
  if (n_classes < 2)
    fail("n_classes must be >= 2");
  if (frames < 1)
    fail("frames must be >= 1");
  if (gru_hidden < 1 || gru_layers < 1)
    fail("GRU hidden size and layer count must be >= 1");
  if (stage_widths.empty())
    fail("at least one frontend stage is required");
  for (int w : stage_widths)
    if (w < 1 || se_reduction < 1 || w % se_reduction != 0)
      fail("SE reduction " + std::to_string(se_reduction) + " must divide stage width " +
           std::to_string(w));
  if (dropout < 0.0 || dropout >= 1.0)
    fail("dropout must be in [0, 1)");
  if (attention_kernel < 1 || attention_kernel % 2 == 0)
    fail("attention kernel must be odd");
  if (frame_size < 4)
    fail("frame size too small");
}

LipReadingNet::LipReadingNet(const ModelConfig &cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  stem = Conv2d(cfg_.in_channels(), cfg_.stem_width, 3, 2, 1, rng, false);
  stem_norm = BatchNorm(cfg_.stem_width);
  Index in = cfg_.stem_width;
  for (int w : cfg_.stage_widths) {
    stages.emplace_back(in, w, 2, cfg_.se_reduction, rng);
    in = w;
  }
  if (cfg_.attention)
    attention.emplace(in, cfg_.attention_kernel, rng);
  gru = BiGRU(in, cfg_.gru_hidden, cfg_.gru_layers, cfg_.dropout, rng);
  head = Linear(2 * cfg_.gru_hidden, cfg_.n_classes, rng);
  if (cfg_.frame_head)
    frame_head.emplace(2 * cfg_.gru_hidden, cfg_.n_classes, rng);
}

Tensor LipReadingNet::frontend(const Tensor &clips) const {
  if (clips.rank() != 5 || clips.dim(1) != cfg_.frames || clips.dim(2) != cfg_.in_channels() ||
      clips.dim(3) != cfg_.frame_size || clips.dim(4) != cfg_.frame_size)
    throw ShapeError("network input " + to_string(clips.shape()) + " does not match [B x " +
                     std::to_string(cfg_.frames) + " x " + std::to_string(cfg_.in_channels()) +
                     " x " + std::to_string(cfg_.frame_size) + " x " +
                     std::to_string(cfg_.frame_size) + "]");
  const Index n = clips.dim(0) * clips.dim(1);
  Tensor x = reshape(clips, {n, clips.dim(2), clips.dim(3), clips.dim(4)});
  x = relu(stem_norm.forward(stem.forward(x)));
  for (const SEBlock &b : stages)
    x = b.forward(x);
  return x;
}

Tensor LipReadingNet::frame_features(const Tensor &feature_map, const Tensor *keep,
                                     std::optional<AttentionBundle> *bundle) const {
  if (!attention) {
    if (keep != nullptr)
      throw std::invalid_argument("frame suppression needs the attention block");
    return squeeze(feature_map);
  }
  AttentionBundle b = attention->forward(feature_map, keep);
  Tensor fused = b.fused;
  if (bundle != nullptr)
    *bundle = std::move(b);
  return fused;
}

Tensor LipReadingNet::backend(const Tensor &seq, Rng *dropout_rng) const {
  return gru.forward(seq, dropout_rng);
}

NetworkOutput LipReadingNet::classify(const Tensor &seq_features) const {
  NetworkOutput out;
  const Index b = seq_features.dim(0), t = seq_features.dim(1), d = seq_features.dim(2);
  out.sequence_logits = head.forward(mean(seq_features, {1}));
  if (frame_head)
    out.frame_logits = reshape(frame_head->forward(reshape(seq_features, {b * t, d})),
                               {b, t, static_cast<Index>(cfg_.n_classes)});
  return out;
}

NetworkOutput LipReadingNet::forward(const Tensor &clips, Rng *dropout_rng,
                                     const Tensor *keep) const {
  const Index b = clips.dim(0), t = clips.dim(1);
  std::optional<AttentionBundle> bundle;
  Tensor feats = frame_features(frontend(clips), keep, &bundle);
  if (cfg_.dropout > 0.0 && training_mode()) {
    if (dropout_rng == nullptr)
      throw std::invalid_argument("training-mode dropout needs a generator");
    feats = dropout(feats, cfg_.dropout, *dropout_rng);
  }
  const Tensor seq = backend(reshape(feats, {b, t, feats.dim(1)}), dropout_rng);
  NetworkOutput out = classify(seq);
  out.attention = std::move(bundle);
  return out;
}

ParamList LipReadingNet::parameters() const {
  ParamList p;
  stem.collect("stem", p);
  stem_norm.collect("stem_norm", p);
  for (std::size_t i = 0; i < stages.size(); ++i)
    stages[i].collect("stage" + std::to_string(i + 1), p);
  if (attention)
    attention->collect("attention", p);
  gru.collect("gru", p);
  head.collect("head", p);
  if (frame_head)
    frame_head->collect("frame_head", p);
  return p;
}

std::vector<BatchNorm *> LipReadingNet::norm_layers() {
  std::vector<BatchNorm *> out{&stem_norm};
  for (SEBlock &b : stages) {
    out.push_back(&b.norm1);
    out.push_back(&b.norm2);
    if (b.shortcut_norm)
      out.push_back(&*b.shortcut_norm);
  }
  return out;
}

void LipReadingNet::recalibrate_norms(std::span<const Tensor> batches) {
  if (batches.empty())
    return;
  const auto norms = norm_layers();
  std::vector<double> momentum;
  for (BatchNorm *bn : norms) {
    momentum.push_back(bn->momentum);
    bn->running_mean.data().setZero();
    bn->running_var.data().setZero();
  }
  NoGradScope no_grad;
  for (std::size_t k = 0; k < batches.size(); ++k) {
    // momentum 1/(k+1) turns the running update into a cumulative mean
    for (BatchNorm *bn : norms)
      bn->momentum = 1.0 / static_cast<double>(k + 1);
    frontend(batches[k]);
  }
  for (std::size_t i = 0; i < norms.size(); ++i)
    norms[i]->momentum = momentum[i];
}

ParamList LipReadingNet::buffers() const {
  ParamList p;
  stem_norm.collect_buffers("stem_norm", p);
  for (std::size_t i = 0; i < stages.size(); ++i)
    stages[i].collect_buffers("stage" + std::to_string(i + 1), p);
  return p;
}

ParamList LipReadingNet::state() const {
  ParamList p = parameters();
  const ParamList b = buffers();
  p.insert(p.end(), b.begin(), b.end());
  return p;
}

void save_checkpoint(const std::filesystem::path &dir, const ParamList &params,
                     const std::string &config_text) {
  std::filesystem::create_directories(dir);
  std::ostringstream manifest;
  for (const auto &p : params) {
    write_vsrt(dir / (p.name + ".vsrt"), p.tensor);
    manifest << p.name;
    for (Index d : p.tensor.shape())
      manifest << ' ' << d;
    manifest << '\n';
  }
  write_file_atomic(dir / "manifest.txt", manifest.str());
  write_file_atomic(dir / "config.txt", config_text);
}

void load_checkpoint(const std::filesystem::path &dir, const ParamList &params) {
  if (!std::filesystem::exists(dir / "manifest.txt"))
    throw std::runtime_error("not a checkpoint directory: " + dir.string());
  for (const auto &p : params) {
    const Tensor t = read_vsrt(dir / (p.name + ".vsrt"));
    if (t.shape() != p.tensor.shape())
      throw ShapeError("checkpoint tensor " + p.name + " has shape " + to_string(t.shape()) +
                       ", model expects " + to_string(p.tensor.shape()));
    Tensor target = p.tensor;
    target.data() = t.data();
  }
}

} // namespace vsr
