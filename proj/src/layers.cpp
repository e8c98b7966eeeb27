// SPDX-License-Identifier: Apache-2.0
#include <vsr/layers.hpp>

#include <cmath>
#include <stdexcept>

namespace vsr {

Index count_parameters(const ParamList &params) {
  Index n = 0;
  for (const auto &p : params)
    n += p.tensor.size();
  return n;
}

Tensor glorot_uniform(Shape shape, Index fan_in, Index fan_out, Rng &rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Array values(numel(shape));
  for (Index i = 0; i < values.size(); ++i)
    values[i] = dist(rng);
  return Tensor(std::move(shape), std::move(values), true);
}

static Tensor zero_param(Shape shape) {
  Tensor t(std::move(shape), 0.0);
  t.set_requires_grad(true);
  return t;
}

Linear::Linear(Index in, Index out, Rng &rng)
    : weight(glorot_uniform({in, out}, in, out, rng)), bias(zero_param({out})) {}

Tensor Linear::forward(const Tensor &x) const { return add_bias(matmul(x, weight), bias); }

void Linear::collect(const std::string &prefix, ParamList &out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

Conv2d::Conv2d(Index in, Index out, int kernel, int stride_, int padding_, Rng &rng,
               bool with_bias)
    : weight(glorot_uniform({out, in, kernel, kernel}, in * kernel * kernel,
                            out * kernel * kernel, rng)),
      stride(stride_), padding(padding_) {
  if (with_bias)
    bias = zero_param({out});
}

Tensor Conv2d::forward(const Tensor &x) const {
  Tensor y = conv2d(x, weight, stride, padding);
  return bias.defined() ? add_bias(y, bias) : y;
}

void Conv2d::collect(const std::string &prefix, ParamList &out) const {
  out.push_back({prefix + ".weight", weight});
  if (bias.defined())
    out.push_back({prefix + ".bias", bias});
}

BatchNorm::BatchNorm(Index channels, double momentum_, double eps_)
    : gamma(Shape{channels}, Array::Ones(channels), true), beta(zero_param({channels})),
      running_mean(Shape{channels}, 0.0), running_var(Shape{channels}, 1.0),
      momentum(momentum_), eps(eps_) {}

Tensor BatchNorm::forward(const Tensor &x) const {
  if (!training_mode())
    return batch_norm(x, gamma, beta, eps, &running_mean.data(), &running_var.data());
  Array mu, var;
  Tensor y = batch_norm(x, gamma, beta, eps, nullptr, nullptr, &mu, &var);
  const double m = static_cast<double>(x.size() / x.dim(1));
  if (m > 1.0) {
    // The running tensors share storage with every copy of this layer.
    Tensor rm = running_mean, rv = running_var;
    rm.data() = (1.0 - momentum) * rm.data() + momentum * mu;
    rv.data() = (1.0 - momentum) * rv.data() + momentum * var * (m / (m - 1.0));
  }
  return y;
}

void BatchNorm::collect(const std::string &prefix, ParamList &out) const {
  out.push_back({prefix + ".weight", gamma});
  out.push_back({prefix + ".bias", beta});
}

void BatchNorm::collect_buffers(const std::string &prefix, ParamList &out) const {
  out.push_back({prefix + ".running_mean", running_mean});
  out.push_back({prefix + ".running_var", running_var});
}

Tensor squeeze(const Tensor &f) { return mean(f, {2, 3}); }

SEBlock::SEBlock(Index in, Index out, int stride, int reduction, Rng &rng) {
  if (reduction < 1 || out % reduction != 0)
    throw std::invalid_argument("SE reduction " + std::to_string(reduction) +
                                " does not divide " + std::to_string(out) + " channels");
  conv1 = Conv2d(in, out, 3, stride, 1, rng, false);
  conv2 = Conv2d(out, out, 3, 1, 1, rng, false);
  norm1 = BatchNorm(out);
  norm2 = BatchNorm(out);
  if (in != out || stride != 1) {
    shortcut = Conv2d(in, out, 1, stride, 0, rng, false);
    shortcut_norm = BatchNorm(out);
  }
  fc1 = Linear(out, out / reduction, rng);
  fc2 = Linear(out / reduction, out, rng);
}

Tensor SEBlock::excitation(const Tensor &branch) const {
  return sigmoid(fc2.forward(relu(fc1.forward(squeeze(branch)))));
}

Tensor SEBlock::forward(const Tensor &x) const {
  const Tensor branch =
      norm2.forward(conv2.forward(relu(norm1.forward(conv1.forward(x)))));
  const Shape &s = branch.shape();
  const Tensor gate = expand(reshape(excitation(branch), {s[0], s[1], 1, 1}), s);
  const Tensor residual = shortcut ? shortcut_norm->forward(shortcut->forward(x)) : x;
  return relu(add(mul(branch, gate), residual));
}

void SEBlock::collect(const std::string &prefix, ParamList &out) const {
  conv1.collect(prefix + ".conv1", out);
  norm1.collect(prefix + ".norm1", out);
  conv2.collect(prefix + ".conv2", out);
  norm2.collect(prefix + ".norm2", out);
  if (shortcut) {
    shortcut->collect(prefix + ".shortcut", out);
    shortcut_norm->collect(prefix + ".shortcut_norm", out);
  }
  fc1.collect(prefix + ".se_fc1", out);
  fc2.collect(prefix + ".se_fc2", out);
}

void SEBlock::collect_buffers(const std::string &prefix, ParamList &out) const {
  norm1.collect_buffers(prefix + ".norm1", out);
  norm2.collect_buffers(prefix + ".norm2", out);
  if (shortcut_norm)
    shortcut_norm->collect_buffers(prefix + ".shortcut_norm", out);
}

GRUDirection::GRUDirection(Index input, Index hidden_, Rng &rng) : hidden(hidden_) {
  const Index h = hidden;
  // per-gate fan sizes
  w_x = glorot_uniform({input, 3 * h}, input, h, rng);
  u_zr = glorot_uniform({h, 2 * h}, h, h, rng);
  u_n = glorot_uniform({h, h}, h, h, rng);
  Array b = Array::Zero(3 * h);
  b.head(h).setConstant(1.0);
  bias = Tensor({3 * h}, std::move(b), true);
}

Tensor GRUDirection::step_projected(const Tensor &gx, const Tensor &h) const {
  const Index H = hidden;
  const Tensor gh = matmul(h, u_zr);
  const Tensor z = sigmoid(add(narrow(gx, 1, 0, H), narrow(gh, 1, 0, H)));
  const Tensor r = sigmoid(add(narrow(gx, 1, H, H), narrow(gh, 1, H, H)));
  const Tensor n = tanh(add(narrow(gx, 1, 2 * H, H), matmul(mul(r, h), u_n)));
  // z * h + (1 - z) * n == n + z * (h - n)
  return add(n, mul(z, sub(h, n)));
}

Tensor GRUDirection::step(const Tensor &x_t, const Tensor &h) const {
  return step_projected(add_bias(matmul(x_t, w_x), bias), h);
}

std::vector<Tensor> GRUDirection::run(const Tensor &x, bool reverse) const {
  if (x.rank() != 3)
    throw ShapeError("GRU expects [B x T x D], got " + to_string(x.shape()));
  const Index b = x.dim(0), t_len = x.dim(1), d = x.dim(2);
  if (t_len < 1)
    throw ShapeError("GRU needs at least one time step");
  const Tensor gx_all =
      reshape(add_bias(matmul(reshape(x, {b * t_len, d}), w_x), bias), {b, t_len, 3 * hidden});
  std::vector<Tensor> states(static_cast<std::size_t>(t_len));
  Tensor h = Tensor::zeros({b, hidden});
  for (Index k = 0; k < t_len; ++k) {
    const Index t = reverse ? t_len - 1 - k : k;
    h = step_projected(select(gx_all, 1, t), h);
    states[static_cast<std::size_t>(t)] = h;
  }
  return states;
}

void GRUDirection::collect(const std::string &prefix, ParamList &out) const {
  out.push_back({prefix + ".w_x", w_x});
  out.push_back({prefix + ".u_zr", u_zr});
  out.push_back({prefix + ".u_n", u_n});
  out.push_back({prefix + ".bias", bias});
}

BiGRU::BiGRU(Index input, Index hidden, int layers, double dropout_, Rng &rng)
    : dropout(dropout_) {
  if (layers < 1 || hidden < 1)
    throw std::invalid_argument("BiGRU needs layers >= 1 and hidden >= 1");
  for (int l = 0; l < layers; ++l) {
    const Index in = l == 0 ? input : 2 * hidden;
    fwd.emplace_back(in, hidden, rng);
    bwd.emplace_back(in, hidden, rng);
  }
}

Tensor BiGRU::forward(const Tensor &x, Rng *dropout_rng) const {
  Tensor seq = x;
  for (std::size_t l = 0; l < fwd.size(); ++l) {
    if (l > 0 && dropout > 0.0 && training_mode()) {
      if (dropout_rng == nullptr)
        throw std::invalid_argument("training-mode dropout needs a generator");
      seq = vsr::dropout(seq, dropout, *dropout_rng);
    }
    const auto f = fwd[l].run(seq, false);
    const auto r = bwd[l].run(seq, true);
    std::vector<Tensor> steps;
    steps.reserve(f.size());
    for (std::size_t t = 0; t < f.size(); ++t) {
      const Tensor pair[] = {f[t], r[t]};
      steps.push_back(concat(pair, 1));
    }
    seq = stack(steps, 1);
  }
  return seq;
}

void BiGRU::collect(const std::string &prefix, ParamList &out) const {
  for (std::size_t l = 0; l < fwd.size(); ++l) {
    fwd[l].collect(prefix + ".l" + std::to_string(l) + ".fwd", out);
    bwd[l].collect(prefix + ".l" + std::to_string(l) + ".bwd", out);
  }
}

} // namespace vsr
