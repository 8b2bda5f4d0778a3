// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace amn {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using Vector = Eigen::VectorXd;
using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

Index numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

// One value in the computation graph. Interior nodes hold their parents and
// a closure that pushes `grad` into the parents' `grad`.
struct Node {
  Shape shape;
  Vector value;
  Vector grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Vector& ensure_grad();
};

}  // namespace detail

/// Dense row-major n-dimensional array of doubles with optional gradient
/// tracking. Copies are shallow: two Tensor objects may refer to the same
/// graph node, which is how parameters are shared between a model and its
/// optimizer.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, Vector values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from_matrix(const RowMatrix& m, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::span<const double> values,
                            bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  Index rank() const { return static_cast<Index>(shape().size()); }
  Index size() const;
  /// Extent of `axis`; negative axes count from the back.
  Index dim(Index axis) const;

  const Vector& values() const;
  /// Mutable storage. Only meaningful on leaves (parameters, inputs).
  Vector& values();
  double item() const;
  double operator[](Index flat) const { return values()[flat]; }

  /// View as a matrix whose column count is the last extent.
  ConstMatrixMap matrix() const;
  MatrixMap matrix();

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  const Vector& grad() const;
  void zero_grad();

  bool all_finite() const;
  /// Copy of the values with no history.
  Tensor detach() const;
  /// Name of the primitive that produced this tensor ("leaf" for inputs).
  const char* op_name() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Topologically ordered record of the graph reachable from a root. Every
/// node appears once, after all of its inputs.
class Tape {
 public:
  static Tape record(const Tensor& root);

  std::size_t size() const { return nodes_.size(); }
  std::span<const detail::Node* const> nodes() const { return nodes_; }

 private:
  std::vector<const detail::Node*> nodes_;
};

/// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
/// reachable tensor that requires them; call zero_grad between steps.
void backward(const Tensor& loss);

/// When enabled, every primitive checks its output for NaN/Inf and throws
/// NumericError naming the op. Off by default; scoped via FiniteCheckScope.
void set_finite_checks(bool on);
bool finite_checks_enabled();

class FiniteCheckScope {
 public:
  explicit FiniteCheckScope(bool on = true);
  ~FiniteCheckScope();
  FiniteCheckScope(const FiniteCheckScope&) = delete;
  FiniteCheckScope& operator=(const FiniteCheckScope&) = delete;

 private:
  bool previous_;
};

/// While a NoGradScope is alive, ops on this thread build no backward graph.
bool grad_enabled();

class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  bool previous_;
};

}  // namespace amn
