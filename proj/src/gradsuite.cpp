// SPDX-License-Identifier: Apache-2.0
#include <vsr/augment.hpp>
#include <vsr/distill.hpp>
#include <vsr/gradsuite.hpp>
#include <vsr/network.hpp>
#include <vsr/random.hpp>

#include <algorithm>
#include <functional>
#include <map>

namespace vsr {

namespace {

struct Case {
  std::vector<Tensor> inputs;
  std::function<Tensor()> build;
  /// Fraction of input elements to probe; 1 checks all of them.
  double fraction = 1.0;
};

using Maker = std::function<Case(Rng &)>;

Index pick(Rng &rng, Index lo, Index hi) {
  return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

Tensor randn(Rng &rng, Shape shape, double sigma = 1.0) {
  Array a(numel(shape));
  for (Index i = 0; i < a.size(); ++i)
    a[i] = normal(rng, 0.0, sigma);
  return Tensor(std::move(shape), std::move(a), true);
}

// Magnitudes in [lo, hi] with random sign; keeps relu inputs off the kink.
Tensor away_from_zero(Rng &rng, Shape shape, double lo, double hi) {
  Array a(numel(shape));
  for (Index i = 0; i < a.size(); ++i)
    a[i] = uniform(rng, lo, hi) * (uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0);
  return Tensor(std::move(shape), std::move(a), true);
}

Tensor positive(Rng &rng, Shape shape, double lo, double hi) {
  Array a(numel(shape));
  for (Index i = 0; i < a.size(); ++i)
    a[i] = uniform(rng, lo, hi);
  return Tensor(std::move(shape), std::move(a), true);
}

Tensor distribution_rows(Rng &rng, Shape shape) {
  Tensor t = positive(rng, shape, 0.1, 1.0);
  const Index v = shape.back();
  for (Index r = 0; r < t.size() / v; ++r)
    t.data().segment(r * v, v) /= t.data().segment(r * v, v).sum();
  t.set_requires_grad(false);
  return t;
}

Shape random_shape(Rng &rng, Index min_rank, Index max_rank, Index max_dim = 4) {
  Shape s(static_cast<std::size_t>(pick(rng, min_rank, max_rank)));
  for (Index &d : s)
    d = pick(rng, 1, max_dim);
  return s;
}

// Scalar loss sum(f() * w) for a fixed random w matching f's output shape.
Case contract(std::vector<Tensor> inputs, std::function<Tensor()> f, Rng &rng) {
  Shape out_shape;
  {
    NoGradScope no_grad;
    out_shape = f().shape();
  }
  Tensor w = randn(rng, out_shape);
  w.set_requires_grad(false);
  return {std::move(inputs), [f, w] { return sum(mul(f(), w)); }};
}

std::vector<Tensor> param_tensors(const ParamList &params) {
  std::vector<Tensor> out;
  for (const auto &p : params)
    out.push_back(p.tensor);
  return out;
}

const std::vector<std::pair<std::string, Maker>> &makers() {
  static const std::vector<std::pair<std::string, Maker>> table{
      {"add",
       [](Rng &r) {
         const Shape s = random_shape(r, 1, 4);
         Tensor a = randn(r, s), b = randn(r, s);
         return contract({a, b}, [a, b] { return add(a, b); }, r);
       }},
      {"sub",
       [](Rng &r) {
         const Shape s = random_shape(r, 1, 4);
         Tensor a = randn(r, s), b = randn(r, s);
         return contract({a, b}, [a, b] { return sub(a, b); }, r);
       }},
      {"mul",
       [](Rng &r) {
         const Shape s = random_shape(r, 1, 4);
         Tensor a = randn(r, s), b = randn(r, s);
         return contract({a, b}, [a, b] { return mul(a, b); }, r);
       }},
      {"scale",
       [](Rng &r) {
         Tensor a = randn(r, random_shape(r, 1, 4));
         const double k = normal(r, 0.0, 2.0);
         return contract({a}, [a, k] { return scale(a, k); }, r);
       }},
      {"add_scalar",
       [](Rng &r) {
         Tensor a = randn(r, random_shape(r, 1, 4));
         const double k = normal(r, 0.0, 2.0);
         return contract({a}, [a, k] { return add_scalar(a, k); }, r);
       }},
      {"sigmoid",
       [](Rng &r) {
         Tensor a = randn(r, random_shape(r, 1, 4), 2.0);
         return contract({a}, [a] { return sigmoid(a); }, r);
       }},
      {"tanh",
       [](Rng &r) {
         Tensor a = randn(r, random_shape(r, 1, 4), 1.5);
         return contract({a}, [a] { return tanh(a); }, r);
       }},
      {"relu",
       [](Rng &r) {
         Tensor a = away_from_zero(r, random_shape(r, 1, 4), 0.05, 2.0);
         return contract({a}, [a] { return relu(a); }, r);
       }},
      {"exp",
       [](Rng &r) {
         Tensor a = randn(r, random_shape(r, 1, 4));
         return contract({a}, [a] { return exp(a); }, r);
       }},
      {"log",
       [](Rng &r) {
         Tensor a = positive(r, random_shape(r, 1, 4), 0.5, 3.0);
         return contract({a}, [a] { return log(a); }, r);
       }},
      {"matmul",
       [](Rng &r) {
         const Index m = pick(r, 1, 5), k = pick(r, 1, 5), n = pick(r, 1, 5);
         Tensor a = randn(r, {m, k}), b = randn(r, {k, n});
         return contract({a, b}, [a, b] { return matmul(a, b); }, r);
       }},
      {"add_bias",
       [](Rng &r) {
         Shape s = random_shape(r, 2, 4);
         Tensor x = randn(r, s), b = randn(r, {s[1]});
         return contract({x, b}, [x, b] { return add_bias(x, b); }, r);
       }},
      {"conv2d",
       [](Rng &r) {
         const Index n = pick(r, 1, 2), c = pick(r, 1, 3), k = pick(r, 1, 3);
         const Index kh = pick(r, 1, 3), kw = pick(r, 1, 3);
         const int stride = static_cast<int>(pick(r, 1, 2)), pad = static_cast<int>(pick(r, 0, 1));
         const Index h = pick(r, std::max<Index>(1, kh - 2 * pad), 6);
         const Index w = pick(r, std::max<Index>(1, kw - 2 * pad), 6);
         Tensor x = randn(r, {n, c, h, w}), kern = randn(r, {k, c, kh, kw});
         return contract({x, kern}, [x, kern, stride, pad] { return conv2d(x, kern, stride, pad); },
                         r);
       }},
      {"reshape",
       [](Rng &r) {
         const Index a = pick(r, 1, 4), b = pick(r, 1, 4), c = pick(r, 1, 3);
         Tensor x = randn(r, {a, b, c});
         return contract({x}, [x, a, b, c] { return reshape(x, {c, a * b}); }, r);
       }},
      {"expand",
       [](Rng &r) {
         Shape s = random_shape(r, 1, 4);
         Shape src = s;
         for (Index &d : src)
           if (uniform(r, 0.0, 1.0) < 0.5)
             d = 1;
         Tensor x = randn(r, src);
         return contract({x}, [x, s] { return expand(x, s); }, r);
       }},
      {"narrow",
       [](Rng &r) {
         const Shape s = random_shape(r, 1, 4);
         const int axis = static_cast<int>(pick(r, 0, static_cast<Index>(s.size()) - 1));
         const Index start = pick(r, 0, s[static_cast<std::size_t>(axis)] - 1);
         const Index len = pick(r, 1, s[static_cast<std::size_t>(axis)] - start);
         Tensor x = randn(r, s);
         return contract({x}, [x, axis, start, len] { return narrow(x, axis, start, len); }, r);
       }},
      {"select",
       [](Rng &r) {
         const Shape s = random_shape(r, 2, 4);
         const int axis = static_cast<int>(pick(r, 0, static_cast<Index>(s.size()) - 1));
         const Index at = pick(r, 0, s[static_cast<std::size_t>(axis)] - 1);
         Tensor x = randn(r, s);
         return contract({x}, [x, axis, at] { return select(x, axis, at); }, r);
       }},
      {"concat",
       [](Rng &r) {
         Shape s = random_shape(r, 1, 3);
         const int axis = static_cast<int>(pick(r, 0, static_cast<Index>(s.size()) - 1));
         std::vector<Tensor> parts;
         for (Index k = pick(r, 1, 3); k > 0; --k) {
           s[static_cast<std::size_t>(axis)] = pick(r, 1, 3);
           parts.push_back(randn(r, s));
         }
         return contract(parts, [parts, axis] { return concat(parts, axis); }, r);
       }},
      {"stack",
       [](Rng &r) {
         const Shape s = random_shape(r, 1, 3);
         const int axis = static_cast<int>(pick(r, 0, static_cast<Index>(s.size())));
         std::vector<Tensor> parts;
         for (Index k = pick(r, 1, 3); k > 0; --k)
           parts.push_back(randn(r, s));
         return contract(parts, [parts, axis] { return stack(parts, axis); }, r);
       }},
      {"sum",
       [](Rng &r) {
         Tensor x = randn(r, random_shape(r, 1, 4));
         return contract({x}, [x] { return sum(x); }, r);
       }},
      {"mean",
       [](Rng &r) {
         Tensor x = randn(r, random_shape(r, 1, 4));
         return contract({x}, [x] { return mean(x); }, r);
       }},
      {"reduce",
       [](Rng &r) {
         const Shape s = random_shape(r, 2, 4);
         std::vector<int> axes;
         for (int a = 0; a < static_cast<int>(s.size()); ++a)
           if (uniform(r, 0.0, 1.0) < 0.5)
             axes.push_back(a);
         if (axes.empty())
           axes.push_back(0);
         const Reduce kind = uniform(r, 0.0, 1.0) < 0.5 ? Reduce::sum : Reduce::mean;
         Tensor x = randn(r, s);
         return contract({x}, [x, axes, kind] { return reduce(x, kind, axes); }, r);
       }},
      {"avg_pool2d",
       [](Rng &r) {
         const Index k = pick(r, 1, 3);
         Tensor x = randn(r, {pick(r, 1, 2), pick(r, 1, 3), k * pick(r, 1, 3), k * pick(r, 1, 3)});
         return contract({x}, [x, k] { return avg_pool2d(x, static_cast<int>(k)); }, r);
       }},
      {"softmax",
       [](Rng &r) {
         const Shape s = random_shape(r, 1, 3, 5);
         const int axis = static_cast<int>(pick(r, 0, static_cast<Index>(s.size()) - 1));
         Tensor x = randn(r, s, 2.0);
         return contract({x}, [x, axis] { return softmax(x, axis); }, r);
       }},
      {"log_softmax",
       [](Rng &r) {
         const Shape s = random_shape(r, 1, 3, 5);
         const int axis = static_cast<int>(pick(r, 0, static_cast<Index>(s.size()) - 1));
         Tensor x = randn(r, s, 2.0);
         return contract({x}, [x, axis] { return log_softmax(x, axis); }, r);
       }},
      {"batch_norm",
       [](Rng &r) {
         // At least 4 values per channel; tiny batches make the variance, and
         // with it the curvature, arbitrarily extreme.
         Shape s = random_shape(r, 2, 4);
         s[0] = std::max<Index>(s[0], 2);
         if (numel(s) / s[1] < 4)
           s.push_back(2);
         Tensor x = randn(r, s), g = randn(r, {s[1]}), b = randn(r, {s[1]});
         if (uniform(r, 0.0, 1.0) < 0.5)
           return contract({x, g, b}, [x, g, b] { return batch_norm(x, g, b, 1e-5); }, r);
         Array mu(s[1]), var(s[1]);
         for (Index i = 0; i < s[1]; ++i) {
           mu[i] = normal(r);
           var[i] = uniform(r, 0.5, 2.0);
         }
         return contract({x, g, b}, [x, g, b, mu, var] { return batch_norm(x, g, b, 1e-5, &mu, &var); },
                         r);
       }},
      {"dropout",
       [](Rng &r) {
         Tensor x = randn(r, random_shape(r, 1, 4));
         const double p = uniform(r, 0.1, 0.6);
         const std::uint64_t mask_seed = r();
         return contract({x},
                         [x, p, mask_seed] {
                           Rng mask(mask_seed);
                           return dropout(x, p, mask);
                         },
                         r);
       }},
      {"linear",
       [](Rng &r) {
         Linear lin(pick(r, 1, 5), pick(r, 1, 5), r);
         Tensor x = randn(r, {pick(r, 1, 3), lin.weight.dim(0)});
         std::vector<Tensor> in{x, lin.weight, lin.bias};
         return contract(in, [x, lin] { return lin.forward(x); }, r);
       }},
      {"se_block",
       [](Rng &r) {
         // Norms make the block invariant to the scale of each conv; with one
         // input channel a near-zero shortcut weight turns that into extreme
         // curvature, so draw at least two.
         const Index in = pick(r, 2, 3), out = 2 * pick(r, 1, 2);
         SEBlock block(in, out, static_cast<int>(pick(r, 1, 2)), 2, r);
         Tensor x = randn(r, {pick(r, 2, 3), in, pick(r, 4, 6), pick(r, 4, 6)});
         ParamList params;
         block.collect("se", params);
         std::vector<Tensor> inputs = param_tensors(params);
         inputs.insert(inputs.begin(), x);
         return contract(inputs, [x, block] { return block.forward(x); }, r);
       }},
      {"gru_step",
       [](Rng &r) {
         GRUDirection cell(pick(r, 1, 4), pick(r, 1, 4), r);
         const Index b = pick(r, 1, 3);
         Tensor x = randn(r, {b, cell.w_x.dim(0)}), h = randn(r, {b, cell.hidden}, 0.5);
         std::vector<Tensor> in{x, h, cell.w_x, cell.u_zr, cell.u_n, cell.bias};
         return contract(in, [x, h, cell] { return cell.step(x, h); }, r);
       }},
      {"bigru",
       [](Rng &r) {
         BiGRU gru(pick(r, 1, 3), pick(r, 1, 3), static_cast<int>(pick(r, 1, 3)), 0.0, r);
         Tensor x = randn(r, {pick(r, 1, 2), pick(r, 1, 4), gru.fwd[0].w_x.dim(0)});
         ParamList params;
         gru.collect("gru", params);
         std::vector<Tensor> inputs = param_tensors(params);
         inputs.insert(inputs.begin(), x);
         return contract(inputs, [x, gru] { return gru.forward(x, nullptr); }, r);
       }},
      {"attention",
       [](Rng &r) {
         const Index c = pick(r, 1, 4);
         SpatioTemporalAttention att(c, uniform(r, 0.0, 1.0) < 0.5 ? 1 : 3, r);
         Tensor f = randn(r, {pick(r, 1, 4), c, pick(r, 1, 4), pick(r, 1, 4)});
         ParamList params;
         att.collect("att", params);
         std::vector<Tensor> inputs = param_tensors(params);
         inputs.insert(inputs.begin(), f);
         return contract(inputs,
                         [f, att] {
                           const AttentionBundle b = att.forward(f);
                           const Tensor parts[] = {reshape(b.fused, {b.fused.size()}),
                                                   b.temporal_scores};
                           return concat(parts, 0);
                         },
                         r);
       }},
      {"soft_cross_entropy",
       [](Rng &r) {
         const Index b = pick(r, 1, 4), v = pick(r, 2, 6);
         Tensor logits = randn(r, {b, v}, 2.0);
         Tensor q = distribution_rows(r, {b, v});
         return Case{{logits}, [logits, q] { return soft_cross_entropy(logits, q); }};
       }},
      {"smoothed_cross_entropy",
       [](Rng &r) {
         const Index v = pick(r, 2, 8);
         Tensor logits = randn(r, {v}, 2.0);
         const auto q = smooth_labels(static_cast<int>(pick(r, 0, v - 1)), static_cast<int>(v),
                                      uniform(r, 0.0, 0.3));
         return Case{{logits}, [logits, q] { return smoothed_cross_entropy(logits, q); }};
       }},
      {"mixup_loss",
       [](Rng &r) {
         const Index b = pick(r, 1, 4), v = pick(r, 2, 6);
         Tensor logits = randn(r, {b, v}, 2.0);
         std::vector<int> ya, yb;
         for (Index i = 0; i < b; ++i) {
           ya.push_back(static_cast<int>(pick(r, 0, v - 1)));
           yb.push_back(static_cast<int>(pick(r, 0, v - 1)));
         }
         const double lam = uniform(r, 0.0, 1.0), eps = uniform(r, 0.0, 0.2);
         return Case{{logits},
                     [logits, ya, yb, lam, eps] { return mixup_loss(logits, ya, yb, lam, eps); }};
       }},
      {"sequence_kd_loss",
       [](Rng &r) {
         const Index b = pick(r, 1, 3), v = pick(r, 2, 6);
         Tensor logits = randn(r, {b, v}, 2.0);
         Tensor t = distribution_rows(r, {b, v});
         const double tau = uniform(r, 1.0, 4.0);
         return Case{{logits}, [logits, t, tau] { return sequence_kd_loss(logits, t, tau); }};
       }},
      {"frame_kd_loss",
       [](Rng &r) {
         const Index b = pick(r, 1, 3), t = pick(r, 1, 4), v = pick(r, 2, 5);
         Tensor logits = randn(r, {b, t, v}, 2.0);
         Tensor teacher = distribution_rows(r, {b, t, v});
         const double tau = uniform(r, 1.0, 4.0);
         return Case{{logits},
                     [logits, teacher, tau] { return frame_kd_loss(logits, teacher, tau); }};
       }},
      {"combined_loss",
       [](Rng &r) {
         Tensor ce = randn(r, {1}), seq = randn(r, {1}), frame = randn(r, {1});
         KDConfig cfg;
         cfg.beta_seq = uniform(r, 0.0, 2.0);
         cfg.beta_frame = uniform(r, 0.0, 2.0);
         return Case{{ce, seq, frame}, [ce, seq, frame, cfg] {
                       return sum(combined_loss(ce, seq, frame, cfg));
                     }};
       }},
      {"network",
       [](Rng &r) {
         ModelConfig mc;
         mc.n_classes = 5;
         mc.frames = 4;
         mc.frame_size = 16;
         mc.stem_width = 4;
         mc.stage_widths = {8, 8};
         mc.se_reduction = 4;
         mc.gru_hidden = 6;
         mc.dropout = 0.0;
         mc.attention = uniform(r, 0.0, 1.0) < 0.5;
         mc.frame_head = uniform(r, 0.0, 1.0) < 0.5;
         mc.word_boundary = uniform(r, 0.0, 1.0) < 0.5;
         auto net = std::make_shared<LipReadingNet>(mc, r());
         const Index b = 2;
         Tensor clips = randn(r, {b, mc.frames, mc.in_channels(), mc.frame_size, mc.frame_size});
         clips.set_requires_grad(false);
         std::vector<int> y{static_cast<int>(pick(r, 0, 4)), static_cast<int>(pick(r, 0, 4))};
         Case c = contract(param_tensors(net->parameters()),
                           [net, clips, y] {
                             const NetworkOutput o = net->forward(clips);
                             Tensor loss = mixup_loss(o.sequence_logits, y, y, 1.0, 0.1);
                             if (o.frame_logits.defined())
                               loss = add(loss, mean(mul(o.frame_logits, o.frame_logits)));
                             return reshape(loss, {1});
                           },
                           r);
         return c;
       }},
  };
  return table;
}

} // namespace

std::vector<std::string> grad_suite_ops() {
  std::vector<std::string> out;
  for (const auto &[name, maker] : makers())
    out.push_back(name);
  return out;
}

std::vector<OpCheckResult> run_grad_suite(const GradSuiteOptions &opts,
                                          const std::vector<std::string> &only) {
  for (const std::string &name : only) {
    const auto ops = grad_suite_ops();
    if (std::find(ops.begin(), ops.end(), name) == ops.end())
      throw std::invalid_argument("unknown operation '" + name + "'");
  }
  std::vector<OpCheckResult> results;
  for (const auto &[name, maker] : makers()) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end())
      continue;
    const bool is_network = name == "network";
    OpCheckResult res;
    res.op = name;
    res.cases = is_network ? opts.network_cases : opts.cases;
    Rng rng(derive_seed(opts.seed, name));
    for (int k = 0; k < res.cases; ++k) {
      Case c = maker(rng);
      GradCheckOptions check = opts.check;
      check.seed = rng();
      check.skip_kinks = true;
      if (is_network) {
        Index total = 0;
        for (const Tensor &t : c.inputs)
          total += t.size();
        check.samples = std::max<Index>(1, static_cast<Index>(opts.network_fraction *
                                                              static_cast<double>(total)));
      }
      const CheckReport report = finite_diff_check(c.build, c.inputs, check);
      for (const InputCheck &in : report.inputs) {
        res.elements += in.checked;
        res.skipped += in.skipped;
      }
      res.max_rel_error = std::max(res.max_rel_error, report.max_rel_error);
    }
    res.passed = res.max_rel_error < opts.check.tolerance;
    results.push_back(res);
  }
  return results;
}

} // namespace vsr
