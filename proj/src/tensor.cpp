// SPDX-License-Identifier: Apache-2.0
#include "amn/tensor.hpp"

#include "amn/error.hpp"

#include <sstream>
#include <unordered_set>
#include <utility>

namespace amn {

namespace {
thread_local bool g_finite_checks = false;
thread_local bool g_grad_enabled = true;
}  // namespace

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) n *= e;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

Vector& Node::ensure_grad() {
  if (grad.size() != value.size()) grad = Vector::Zero(value.size());
  return grad;
}

}  // namespace detail

Tensor::Tensor(Shape shape, Vector values, bool requires_grad) {
  for (Index e : shape) {
    if (e <= 0) throw DimensionError("tensor extents must be positive, got " + to_string(shape));
  }
  if (numel(shape) != values.size()) {
    throw DimensionError("shape " + to_string(shape) + " needs " +
                         std::to_string(numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const Index n = numel(shape);
  return Tensor(std::move(shape), Vector::Zero(n), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const Index n = numel(shape);
  return Tensor(std::move(shape), Vector::Constant(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, Vector::Constant(1, value), requires_grad);
}

Tensor Tensor::from_matrix(const RowMatrix& m, bool requires_grad) {
  Vector v = Eigen::Map<const Vector>(m.data(), m.size());
  return Tensor(Shape{m.rows(), m.cols()}, std::move(v), requires_grad);
}

Tensor Tensor::from_values(Shape shape, std::span<const double> values,
                           bool requires_grad) {
  Vector v = Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return node_->shape;
}

Index Tensor::size() const { return values().size(); }

Index Tensor::dim(Index axis) const {
  const Index r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         to_string(shape()));
  }
  return shape()[static_cast<std::size_t>(axis)];
}

const Vector& Tensor::values() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return node_->value;
}

Vector& Tensor::values() {
  if (!node_) throw ContractError("use of an undefined tensor");
  return node_->value;
}

double Tensor::item() const {
  if (size() != 1) {
    throw ContractError("item() needs a single-element tensor, got shape " + to_string(shape()));
  }
  return values()[0];
}

ConstMatrixMap Tensor::matrix() const {
  const Index cols = rank() == 0 ? 1 : shape().back();
  return ConstMatrixMap(values().data(), size() / cols, cols);
}

MatrixMap Tensor::matrix() {
  const Index cols = rank() == 0 ? 1 : shape().back();
  return MatrixMap(values().data(), size() / cols, cols);
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!node_) throw ContractError("use of an undefined tensor");
  if (node_->backward && !on) {
    throw ContractError("cannot stop gradient tracking on an interior node; use detach()");
  }
  node_->requires_grad = on;
}

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->value.size(); }

const Vector& Tensor::grad() const {
  if (!has_grad()) throw ContractError("tensor has no gradient; run backward first");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.resize(0);
}

bool Tensor::all_finite() const { return values().allFinite(); }

Tensor Tensor::detach() const { return Tensor(shape(), values(), false); }

const char* Tensor::op_name() const { return node_ ? node_->op : "undefined"; }

Tape Tape::record(const Tensor& root) {
  Tape tape;
  if (!root.defined()) return tape;
  // Iterative post-order DFS; a node is emitted once all its parents are.
  std::unordered_set<const detail::Node*> seen;
  std::vector<std::pair<const detail::Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      const detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      tape.nodes_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

void backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + to_string(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward on a tensor that does not require gradients");
  }
  const Tape tape = Tape::record(loss);
  loss.node()->ensure_grad()[0] += 1.0;
  auto nodes = tape.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    auto* node = const_cast<detail::Node*>(*it);
    if (node->backward && node->grad.size() == node->value.size()) node->backward(*node);
  }
}

void set_finite_checks(bool on) { g_finite_checks = on; }
bool finite_checks_enabled() { return g_finite_checks; }

FiniteCheckScope::FiniteCheckScope(bool on) : previous_(g_finite_checks) { g_finite_checks = on; }
FiniteCheckScope::~FiniteCheckScope() { g_finite_checks = previous_; }

bool grad_enabled() { return g_grad_enabled; }
NoGradScope::NoGradScope() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradScope::~NoGradScope() { g_grad_enabled = previous_; }

}  // namespace amn
