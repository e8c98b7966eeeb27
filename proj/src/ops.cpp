// SPDX-License-Identifier: Apache-2.0
#include <vsr/ops.hpp>

#include <algorithm>
#include <cmath>

namespace vsr {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMat>;
using RowMap = Eigen::Map<RowMat>;

void accumulate(Node &parent, const Array &g) {
  if (parent.requires_grad)
    parent.grad_buffer() += g;
}

Node &parent(Node &n, std::size_t i) { return *n.parents[i]; }

int normalize_axis(int axis, int rank) {
  int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank)
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  return a;
}

struct AxisSplit {
  Index outer = 1, n = 1, inner = 1;
};

AxisSplit split_at(const Shape &shape, int axis) {
  AxisSplit s;
  for (int i = 0; i < axis; ++i)
    s.outer *= shape[i];
  s.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i)
    s.inner *= shape[i];
  return s;
}

void require_same_shape(const Tensor &a, const Tensor &b, const char *op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                     " vs " + to_string(b.shape()));
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor &x, const char *op, Fwd fwd, Deriv deriv) {
  Array y = fwd(x.data());
  return Tensor::make(x.shape(), std::move(y), op, {x}, [deriv](Node &n) {
    Node &p = parent(n, 0);
    accumulate(p, n.grad * deriv(p.value, n.value));
  });
}

} // namespace

Tensor add(const Tensor &a, const Tensor &b) {
  require_same_shape(a, b, "add");
  return Tensor::make(a.shape(), a.data() + b.data(), "add", {a, b}, [](Node &n) {
    accumulate(parent(n, 0), n.grad);
    accumulate(parent(n, 1), n.grad);
  });
}

Tensor sub(const Tensor &a, const Tensor &b) {
  require_same_shape(a, b, "sub");
  return Tensor::make(a.shape(), a.data() - b.data(), "sub", {a, b}, [](Node &n) {
    accumulate(parent(n, 0), n.grad);
    accumulate(parent(n, 1), -n.grad);
  });
}

Tensor mul(const Tensor &a, const Tensor &b) {
  require_same_shape(a, b, "mul");
  return Tensor::make(a.shape(), a.data() * b.data(), "mul", {a, b}, [](Node &n) {
    Node &pa = parent(n, 0);
    Node &pb = parent(n, 1);
    accumulate(pa, n.grad * pb.value);
    accumulate(pb, n.grad * pa.value);
  });
}

Tensor scale(const Tensor &x, double s) {
  return Tensor::make(x.shape(), x.data() * s, "scale", {x},
                      [s](Node &n) { accumulate(parent(n, 0), n.grad * s); });
}

Tensor add_scalar(const Tensor &x, double c) {
  return Tensor::make(x.shape(), x.data() + c, "add_scalar", {x},
                      [](Node &n) { accumulate(parent(n, 0), n.grad); });
}

Tensor sigmoid(const Tensor &x) {
  return unary(
      x, "sigmoid", [](const Array &v) -> Array { return 1.0 / (1.0 + (-v).exp()); },
      [](const Array &, const Array &y) -> Array { return y * (1.0 - y); });
}

Tensor tanh(const Tensor &x) {
  return unary(
      x, "tanh", [](const Array &v) -> Array { return v.tanh(); },
      [](const Array &, const Array &y) -> Array { return 1.0 - y.square(); });
}

namespace {
thread_local KinkProbe *g_kink_probe = nullptr;
}

KinkProbe::KinkProbe() : previous_(g_kink_probe) { g_kink_probe = this; }
KinkProbe::~KinkProbe() { g_kink_probe = previous_; }

Tensor relu(const Tensor &x) {
  if (KinkProbe *probe = g_kink_probe) {
    for (double v : x.data()) {
      probe->hash_ ^= v > 0.0 ? 1u : 0u;
      probe->hash_ *= 1099511628211ull;
    }
  }
  return unary(
      x, "relu", [](const Array &v) -> Array { return v.max(0.0); },
      [](const Array &v, const Array &) -> Array { return (v > 0.0).cast<double>(); });
}

Tensor exp(const Tensor &x) {
  return unary(
      x, "exp", [](const Array &v) -> Array { return v.exp(); },
      [](const Array &, const Array &y) -> Array { return y; });
}

Tensor log(const Tensor &x) {
  if ((x.data() <= 0.0).any())
    throw std::domain_error("log of non-positive value");
  return unary(
      x, "log", [](const Array &v) -> Array { return v.log(); },
      [](const Array &v, const Array &) -> Array { return v.inverse(); });
}

Tensor matmul(const Tensor &a, const Tensor &b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul expects rank-2 operands");
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeError("matmul: inner dimensions differ, " + to_string(a.shape()) +
                     " * " + to_string(b.shape()));
  Array out(m * n);
  RowMap(out.data(), m, n).noalias() =
      ConstRowMap(a.data().data(), m, k) * ConstRowMap(b.data().data(), k, n);
  return Tensor::make({m, n}, std::move(out), "matmul", {a, b}, [m, k, n](Node &node) {
    ConstRowMap g(node.grad.data(), m, n);
    Node &pa = parent(node, 0);
    Node &pb = parent(node, 1);
    if (pa.requires_grad)
      RowMap(pa.grad_buffer().data(), m, k).noalias() +=
          g * ConstRowMap(pb.value.data(), k, n).transpose();
    if (pb.requires_grad)
      RowMap(pb.grad_buffer().data(), k, n).noalias() +=
          ConstRowMap(pa.value.data(), m, k).transpose() * g;
  });
}

Tensor add_bias(const Tensor &x, const Tensor &bias) {
  if (x.rank() < 2 || bias.rank() != 1 || bias.dim(0) != x.dim(1))
    throw ShapeError("add_bias: bias " + to_string(bias.shape()) +
                     " does not match channel axis of " + to_string(x.shape()));
  const AxisSplit s = split_at(x.shape(), 1);
  Array out = x.data();
  for (Index o = 0; o < s.outer; ++o)
    for (Index c = 0; c < s.n; ++c)
      out.segment((o * s.n + c) * s.inner, s.inner) += bias.data()[c];
  return Tensor::make(x.shape(), std::move(out), "add_bias", {x, bias}, [s](Node &n) {
    accumulate(parent(n, 0), n.grad);
    Node &pb = parent(n, 1);
    if (!pb.requires_grad)
      return;
    Array &gb = pb.grad_buffer();
    for (Index o = 0; o < s.outer; ++o)
      for (Index c = 0; c < s.n; ++c)
        gb[c] += n.grad.segment((o * s.n + c) * s.inner, s.inner).sum();
  });
}

Tensor reshape(const Tensor &x, Shape shape) {
  if (numel(shape) != x.size())
    throw ShapeError("reshape " + to_string(x.shape()) + " -> " + to_string(shape));
  return Tensor::make(std::move(shape), x.data(), "reshape", {x},
                      [](Node &n) { accumulate(parent(n, 0), n.grad); });
}

Tensor expand(const Tensor &x, Shape shape) {
  const int r = x.rank();
  if (static_cast<int>(shape.size()) != r)
    throw ShapeError("expand: rank mismatch " + to_string(x.shape()) + " -> " +
                     to_string(shape));
  std::vector<Index> src_stride(r, 0);
  Index stride = 1;
  for (int i = r - 1; i >= 0; --i) {
    if (x.shape()[i] == shape[i])
      src_stride[i] = stride;
    else if (x.shape()[i] != 1)
      throw ShapeError("expand: cannot expand " + to_string(x.shape()) + " to " +
                       to_string(shape));
    stride *= x.shape()[i];
  }
  const Index total = numel(shape);
  std::vector<Index> src_index(total);
  {
    std::vector<Index> counter(r, 0);
    Index src = 0;
    for (Index i = 0; i < total; ++i) {
      src_index[i] = src;
      for (int d = r - 1; d >= 0; --d) {
        ++counter[d];
        src += src_stride[d];
        if (counter[d] < shape[d])
          break;
        src -= src_stride[d] * counter[d];
        counter[d] = 0;
      }
    }
  }
  Array out(total);
  for (Index i = 0; i < total; ++i)
    out[i] = x.data()[src_index[i]];
  return Tensor::make(std::move(shape), std::move(out), "expand", {x},
                      [idx = std::move(src_index)](Node &n) {
                        Node &p = parent(n, 0);
                        if (!p.requires_grad)
                          return;
                        Array &g = p.grad_buffer();
                        for (std::size_t i = 0; i < idx.size(); ++i)
                          g[idx[i]] += n.grad[static_cast<Index>(i)];
                      });
}

Tensor narrow(const Tensor &x, int axis, Index start, Index length) {
  const int a = normalize_axis(axis, x.rank());
  const AxisSplit s = split_at(x.shape(), a);
  if (start < 0 || length <= 0 || start + length > s.n)
    throw ShapeError("narrow: range [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") outside axis of size " +
                     std::to_string(s.n));
  Shape shape = x.shape();
  shape[a] = length;
  Array out(s.outer * length * s.inner);
  const Index block = length * s.inner;
  for (Index o = 0; o < s.outer; ++o)
    out.segment(o * block, block) = x.data().segment((o * s.n + start) * s.inner, block);
  return Tensor::make(std::move(shape), std::move(out), "narrow", {x},
                      [s, start, block](Node &n) {
                        Node &p = parent(n, 0);
                        if (!p.requires_grad)
                          return;
                        Array &g = p.grad_buffer();
                        for (Index o = 0; o < s.outer; ++o)
                          g.segment((o * s.n + start) * s.inner, block) +=
                              n.grad.segment(o * block, block);
                      });
}

Tensor select(const Tensor &x, int axis, Index index) {
  const int a = normalize_axis(axis, x.rank());
  Tensor t = narrow(x, a, index, 1);
  Shape shape = x.shape();
  shape.erase(shape.begin() + a);
  if (shape.empty())
    shape.push_back(1);
  return reshape(t, std::move(shape));
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty())
    throw ShapeError("concat of zero tensors");
  const int a = normalize_axis(axis, parts[0].rank());
  Shape shape = parts[0].shape();
  Index total_n = 0;
  for (const Tensor &p : parts) {
    Shape probe = p.shape();
    if (probe.size() != shape.size())
      throw ShapeError("concat: rank mismatch");
    probe[a] = shape[a];
    if (probe != shape)
      throw ShapeError("concat: incompatible shape " + to_string(p.shape()));
    total_n += p.shape()[a];
  }
  shape[a] = total_n;
  const AxisSplit s = split_at(shape, a);
  Array out(numel(shape));
  std::vector<Index> offsets;
  Index off = 0;
  for (const Tensor &p : parts) {
    offsets.push_back(off);
    const Index block = p.shape()[a] * s.inner;
    for (Index o = 0; o < s.outer; ++o)
      out.segment(o * total_n * s.inner + off * s.inner, block) =
          p.data().segment(o * block, block);
    off += p.shape()[a];
  }
  std::vector<Index> widths;
  for (const Tensor &p : parts)
    widths.push_back(p.shape()[a]);
  return Tensor::make(
      std::move(shape), std::move(out), "concat",
      std::vector<Tensor>(parts.begin(), parts.end()),
      [s, total_n, offsets = std::move(offsets), widths = std::move(widths)](Node &n) {
        for (std::size_t i = 0; i < n.parents.size(); ++i) {
          Node &p = parent(n, i);
          if (!p.requires_grad)
            continue;
          Array &g = p.grad_buffer();
          const Index block = widths[i] * s.inner;
          for (Index o = 0; o < s.outer; ++o)
            g.segment(o * block, block) +=
                n.grad.segment(o * total_n * s.inner + offsets[i] * s.inner, block);
        }
      });
}

Tensor stack(std::span<const Tensor> parts, int axis) {
  if (parts.empty())
    throw ShapeError("stack of zero tensors");
  const int r = parts[0].rank();
  const int a = axis < 0 ? axis + r + 1 : axis;
  if (a < 0 || a > r)
    throw ShapeError("stack: axis out of range");
  std::vector<Tensor> expanded;
  expanded.reserve(parts.size());
  for (const Tensor &p : parts) {
    Shape s = p.shape();
    s.insert(s.begin() + a, 1);
    expanded.push_back(reshape(p, std::move(s)));
  }
  return concat(expanded, a);
}

Tensor sum(const Tensor &x) {
  return Tensor::make({1}, Array::Constant(1, x.data().sum()), "sum", {x},
                      [](Node &n) {
                        Node &p = parent(n, 0);
                        if (p.requires_grad)
                          p.grad_buffer() += n.grad[0];
                      });
}

Tensor mean(const Tensor &x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

namespace {

// Reduces the contiguous axis block [first, last] in one pass.
Tensor reduce_block(const Tensor &x, Reduce kind, int first, int last) {
  const Shape &in = x.shape();
  Index outer = 1, mid = 1, inner = 1;
  for (int i = 0; i < first; ++i)
    outer *= in[i];
  for (int i = first; i <= last; ++i)
    mid *= in[i];
  for (std::size_t i = last + 1; i < in.size(); ++i)
    inner *= in[i];
  Shape shape;
  for (std::size_t i = 0; i < in.size(); ++i)
    if (static_cast<int>(i) < first || static_cast<int>(i) > last)
      shape.push_back(in[i]);
  if (shape.empty())
    shape.push_back(1);
  const double factor = kind == Reduce::mean ? 1.0 / static_cast<double>(mid) : 1.0;
  Array out = Array::Zero(outer * inner);
  for (Index o = 0; o < outer; ++o)
    for (Index m = 0; m < mid; ++m)
      out.segment(o * inner, inner) += x.data().segment((o * mid + m) * inner, inner);
  out *= factor;
  return Tensor::make(std::move(shape), std::move(out),
                      kind == Reduce::mean ? "mean" : "sum", {x},
                      [outer, mid, inner, factor](Node &n) {
                        Node &p = parent(n, 0);
                        if (!p.requires_grad)
                          return;
                        Array &g = p.grad_buffer();
                        for (Index o = 0; o < outer; ++o)
                          for (Index m = 0; m < mid; ++m)
                            g.segment((o * mid + m) * inner, inner) +=
                                factor * n.grad.segment(o * inner, inner);
                      });
}

} // namespace

Tensor reduce(const Tensor &x, Reduce kind, std::span<const int> axes) {
  if (axes.empty())
    throw ShapeError("reduce over an empty axis set");
  std::vector<int> sorted;
  for (int a : axes)
    sorted.push_back(normalize_axis(a, x.rank()));
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ShapeError("reduce: repeated axis");
  // Peel contiguous blocks from the highest axis down so lower indices stay valid.
  Tensor out = x;
  int hi = static_cast<int>(sorted.size()) - 1;
  while (hi >= 0) {
    int lo = hi;
    while (lo > 0 && sorted[lo - 1] == sorted[lo] - 1)
      --lo;
    out = reduce_block(out, kind, sorted[lo], sorted[hi]);
    hi = lo - 1;
  }
  return out;
}

Tensor sum(const Tensor &x, std::initializer_list<int> axes) {
  return reduce(x, Reduce::sum, std::span<const int>(axes.begin(), axes.size()));
}

Tensor mean(const Tensor &x, std::initializer_list<int> axes) {
  return reduce(x, Reduce::mean, std::span<const int>(axes.begin(), axes.size()));
}

Tensor avg_pool2d(const Tensor &x, int k) {
  if (x.rank() != 4 || k <= 0 || x.dim(2) % k != 0 || x.dim(3) % k != 0)
    throw ShapeError("avg_pool2d: " + to_string(x.shape()) + " not divisible by " +
                     std::to_string(k));
  const Index planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index oh = h / k, ow = w / k;
  const double inv = 1.0 / static_cast<double>(k * k);
  Array out = Array::Zero(planes * oh * ow);
  for (Index p = 0; p < planes; ++p)
    for (Index i = 0; i < h; ++i)
      for (Index j = 0; j < w; ++j)
        out[(p * oh + i / k) * ow + j / k] += inv * x.data()[(p * h + i) * w + j];
  return Tensor::make({x.dim(0), x.dim(1), oh, ow}, std::move(out), "avg_pool2d", {x},
                      [planes, h, w, oh, ow, k, inv](Node &n) {
                        Node &p = parent(n, 0);
                        if (!p.requires_grad)
                          return;
                        Array &g = p.grad_buffer();
                        for (Index q = 0; q < planes; ++q)
                          for (Index i = 0; i < h; ++i)
                            for (Index j = 0; j < w; ++j)
                              g[(q * h + i) * w + j] +=
                                  inv * n.grad[(q * oh + i / k) * ow + j / k];
                      });
}

Tensor softmax(const Tensor &x, int axis) {
  const AxisSplit s = split_at(x.shape(), normalize_axis(axis, x.rank()));
  Array y(x.size());
  for (Index o = 0; o < s.outer; ++o)
    for (Index j = 0; j < s.inner; ++j) {
      const Index base = o * s.n * s.inner + j;
      double mx = x.data()[base];
      for (Index i = 1; i < s.n; ++i)
        mx = std::max(mx, x.data()[base + i * s.inner]);
      double total = 0.0;
      for (Index i = 0; i < s.n; ++i) {
        const double e = std::exp(x.data()[base + i * s.inner] - mx);
        y[base + i * s.inner] = e;
        total += e;
      }
      for (Index i = 0; i < s.n; ++i)
        y[base + i * s.inner] /= total;
    }
  return Tensor::make(x.shape(), std::move(y), "softmax", {x}, [s](Node &n) {
    Node &p = parent(n, 0);
    if (!p.requires_grad)
      return;
    Array &g = p.grad_buffer();
    for (Index o = 0; o < s.outer; ++o)
      for (Index j = 0; j < s.inner; ++j) {
        const Index base = o * s.n * s.inner + j;
        double dot = 0.0;
        for (Index i = 0; i < s.n; ++i)
          dot += n.grad[base + i * s.inner] * n.value[base + i * s.inner];
        for (Index i = 0; i < s.n; ++i) {
          const Index at = base + i * s.inner;
          g[at] += n.value[at] * (n.grad[at] - dot);
        }
      }
  });
}

Tensor log_softmax(const Tensor &x, int axis) {
  const AxisSplit s = split_at(x.shape(), normalize_axis(axis, x.rank()));
  Array y(x.size());
  for (Index o = 0; o < s.outer; ++o)
    for (Index j = 0; j < s.inner; ++j) {
      const Index base = o * s.n * s.inner + j;
      double mx = x.data()[base];
      for (Index i = 1; i < s.n; ++i)
        mx = std::max(mx, x.data()[base + i * s.inner]);
      double total = 0.0;
      for (Index i = 0; i < s.n; ++i)
        total += std::exp(x.data()[base + i * s.inner] - mx);
      const double lse = mx + std::log(total);
      for (Index i = 0; i < s.n; ++i)
        y[base + i * s.inner] = x.data()[base + i * s.inner] - lse;
    }
  return Tensor::make(x.shape(), std::move(y), "log_softmax", {x}, [s](Node &n) {
    Node &p = parent(n, 0);
    if (!p.requires_grad)
      return;
    Array &g = p.grad_buffer();
    for (Index o = 0; o < s.outer; ++o)
      for (Index j = 0; j < s.inner; ++j) {
        const Index base = o * s.n * s.inner + j;
        double gsum = 0.0;
        for (Index i = 0; i < s.n; ++i)
          gsum += n.grad[base + i * s.inner];
        for (Index i = 0; i < s.n; ++i) {
          const Index at = base + i * s.inner;
          g[at] += n.grad[at] - std::exp(n.value[at]) * gsum;
        }
      }
  });
}

Tensor dropout(const Tensor &x, double p, std::mt19937_64 &rng) {
  if (p < 0.0 || p >= 1.0)
    throw std::invalid_argument("dropout rate must be in [0, 1)");
  if (!training_mode() || p == 0.0)
    return x;
  std::bernoulli_distribution keep(1.0 - p);
  Array mask(x.size());
  const double kept = 1.0 / (1.0 - p);
  for (Index i = 0; i < mask.size(); ++i)
    mask[i] = keep(rng) ? kept : 0.0;
  return mul(x, Tensor(x.shape(), std::move(mask)));
}

} // namespace vsr
