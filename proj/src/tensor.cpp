// SPDX-License-Identifier: Apache-2.0
#include <vsr/tensor.hpp>

#include <sstream>
#include <unordered_set>
#include <utility>

#ifndef VSR_FINITE_CHECKS
#ifdef NDEBUG
#define VSR_FINITE_CHECKS 0
#else
#define VSR_FINITE_CHECKS 1
#endif
#endif

namespace vsr {

namespace {
thread_local bool g_grad_enabled = true;
thread_local bool g_training = true;
} // namespace

Index numel(const Shape &shape) {
  Index n = 1;
  for (Index d : shape)
    n *= d;
  return n;
}

std::string to_string(const Shape &shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i)
    os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

static void check_shape(const Shape &shape) {
  if (shape.empty())
    throw ShapeError("tensor rank must be >= 1");
  for (Index d : shape)
    if (d <= 0)
      throw ShapeError("tensor dims must be positive, got " + to_string(shape));
}

Tensor::Tensor(Shape shape, double fill) : node_(std::make_shared<Node>()) {
  check_shape(shape);
  node_->value = Array::Constant(numel(shape), fill);
  node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, Array values, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  check_shape(shape);
  if (numel(shape) != values.size())
    throw ShapeError("shape " + to_string(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::from(Shape shape, std::initializer_list<double> values) {
  Array a(static_cast<Index>(values.size()));
  Index i = 0;
  for (double v : values)
    a[i++] = v;
  return Tensor(std::move(shape), std::move(a));
}

Index Tensor::dim(int axis) const {
  if (axis < 0)
    axis += rank();
  if (axis < 0 || axis >= rank())
    throw ShapeError("axis out of range for " + to_string(shape()));
  return node_->shape[static_cast<std::size_t>(axis)];
}

double Tensor::item() const {
  if (size() != 1)
    throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

Tensor &Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

Tensor Tensor::detach() const { return Tensor(shape(), data()); }

Tensor Tensor::make(Shape shape, Array value, const char *op,
                    std::vector<Tensor> parents, BackwardFn backward) {
#if VSR_FINITE_CHECKS
  if (!value.allFinite())
    throw std::domain_error(std::string("non-finite output from op ") + op);
#endif
  Tensor out(std::move(shape), std::move(value));
  out.node_->op = op;
  if (!g_grad_enabled)
    return out;
  bool any = false;
  for (const Tensor &p : parents)
    any = any || p.requires_grad();
  if (!any)
    return out;
  out.node_->requires_grad = true;
  out.node_->parents.reserve(parents.size());
  for (Tensor &p : parents)
    out.node_->parents.push_back(p.node_);
  out.node_->backward = std::move(backward);
  return out;
}

void backward(const Tensor &loss) {
  if (!loss.defined() || loss.size() != 1)
    throw ShapeError("backward() requires a scalar loss");
  if (!loss.requires_grad())
    return;

  // Iterative post-order DFS; reversed it is a topological order.
  std::vector<Node *> order;
  std::unordered_set<Node *> seen;
  std::vector<std::pair<Node *, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto &[node, next] = stack.back();
    if (next < node->parents.size()) {
      Node *p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second)
        stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node *n : order)
    if (!n->parents.empty())
      n->grad.resize(0);

  loss.node()->grad_buffer().setConstant(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node *n = *it;
    if (n->backward && n->grad.size() != 0)
      n->backward(*n);
  }
}

bool grad_enabled() { return g_grad_enabled; }
bool finite_checks_enabled() { return VSR_FINITE_CHECKS != 0; }
NoGradScope::NoGradScope() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradScope::~NoGradScope() { g_grad_enabled = previous_; }

bool training_mode() { return g_training; }
EvalScope::EvalScope() : previous_(g_training) { g_training = false; }
EvalScope::~EvalScope() { g_training = previous_; }

} // namespace vsr
