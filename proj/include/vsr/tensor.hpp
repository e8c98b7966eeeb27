// SPDX-License-Identifier: Apache-2.0
/**
 * @file   tensor.hpp
 * @brief  Dense float64 tensor with reverse-mode differentiation.
 *
 * A Tensor is a shared handle onto a graph node. Ops record their parents and
 * a backward closure only when at least one input requires a gradient, so
 * inference under NoGradScope builds no graph at all.
 */
#ifndef VSR_TENSOR_HPP
#define VSR_TENSOR_HPP

#include <Eigen/Core>

#include <functional>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace vsr {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using Array = Eigen::ArrayXd;

class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

Index numel(const Shape &shape);
std::string to_string(const Shape &shape);

struct Node;
using BackwardFn = std::function<void(Node &)>;

/// One vertex of the computation graph.
struct Node {
  Shape shape;
  Array value;
  Array grad; // empty until backward reaches this node
  bool requires_grad = false;
  const char *op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward; // pushes this->grad into parents

  Array &grad_buffer() {
    if (grad.size() == 0)
      grad = Array::Zero(value.size());
    return grad;
  }
};

class Tensor {
public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, Array values, bool requires_grad = false);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor scalar(double v) { return Tensor(Shape{1}, v); }
  static Tensor from(Shape shape, std::initializer_list<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape &shape() const { return node_->shape; }
  Index dim(int axis) const;
  int rank() const { return static_cast<int>(node_->shape.size()); }
  Index size() const { return node_->value.size(); }

  const Array &data() const { return node_->value; }
  /// Mutable storage; used by optimizers and perturbation-based checks.
  Array &data() { return node_->value; }
  double item() const;
  double operator[](Index i) const { return node_->value[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor &set_requires_grad(bool on);
  bool has_grad() const { return node_->grad.size() != 0; }
  const Array &grad() const { return node_->grad; }
  void zero_grad() { node_->grad.resize(0); }

  /// Copy of the values with no graph history.
  Tensor detach() const;

  Node *node() const { return node_.get(); }
  const std::shared_ptr<Node> &node_ptr() const { return node_; }

  /// Builds an op result. Graph edges and the backward closure are kept only
  /// when grad mode is on and some parent requires a gradient.
  static Tensor make(Shape shape, Array value, const char *op,
                     std::vector<Tensor> parents, BackwardFn backward);

private:
  std::shared_ptr<Node> node_;
};

/// Seeds d(loss)/d(loss) = 1 and propagates through the graph in reverse
/// topological order. Intermediate grads are cleared first; leaf grads
/// accumulate across calls until zero_grad().
void backward(const Tensor &loss);

/// Graph recording switch (thread-local).
bool grad_enabled();

/// True when ops reject NaN/Inf outputs (debug builds, or VSR_CHECK_FINITE).
bool finite_checks_enabled();
class NoGradScope {
public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope &) = delete;
  NoGradScope &operator=(const NoGradScope &) = delete;

private:
  bool previous_;
};

/// Evaluation flag (thread-local). Dropout is the identity while it is set.
bool training_mode();
class EvalScope {
public:
  EvalScope();
  ~EvalScope();
  EvalScope(const EvalScope &) = delete;
  EvalScope &operator=(const EvalScope &) = delete;

private:
  bool previous_;
};

} // namespace vsr

#endif // VSR_TENSOR_HPP
