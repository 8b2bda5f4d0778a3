// SPDX-License-Identifier: Apache-2.0
#include "amn/ops.hpp"

#include "amn/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace amn {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

// Builds the output node. Parents and the backward closure are only kept
// when some input needs a gradient.
Tensor make_result(const char* op, Shape shape, Vector value,
                   std::vector<NodePtr> parents, std::function<void(Node&)> bw) {
  if (finite_checks_enabled() && !value.allFinite()) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
  auto node = std::make_shared<Node>();
  node->op = op;
  node->shape = std::move(shape);
  node->value = std::move(value);
  const bool track = grad_enabled() && std::any_of(parents.begin(), parents.end(),
                                 [](const NodePtr& p) { return p->requires_grad; });
  if (track) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(bw);
  }
  return Tensor(std::move(node));
}

Index norm_axis(Index axis, Index rank, const char* op) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw DimensionError(std::string(op) + ": axis out of range for rank " + std::to_string(rank));
  }
  return axis;
}

// outer x len x inner decomposition around an axis.
struct AxisView {
  Index outer = 1;
  Index len = 1;
  Index inner = 1;
};

AxisView axis_view(const Shape& s, Index axis) {
  AxisView v;
  for (Index i = 0; i < axis; ++i) v.outer *= s[static_cast<std::size_t>(i)];
  v.len = s[static_cast<std::size_t>(axis)];
  for (Index i = axis + 1; i < static_cast<Index>(s.size()); ++i) v.inner *= s[static_cast<std::size_t>(i)];
  return v;
}

// ---------------------------------------------------------------------------
// Broadcasting of b into a.

enum class BroadcastKind { kSame, kScalar, kRowTile, kColumn, kGeneral };

struct Broadcast {
  BroadcastKind kind = BroadcastKind::kSame;
  Index outer = 1;  // kRowTile: repetitions; kColumn: rows
  Index inner = 1;  // kRowTile: b size; kColumn: repetitions per b entry
  std::vector<Index> map;  // kGeneral: a-index -> b-index
};

bool can_broadcast_into(const Shape& a, const Shape& b) {
  if (b.size() > a.size()) return false;
  const std::size_t off = a.size() - b.size();
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (b[i] != a[off + i] && b[i] != 1) return false;
  }
  return true;
}

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  Broadcast p;
  if (a == b) return p;
  if (!can_broadcast_into(a, b)) {
    throw DimensionError(std::string(op) + ": cannot broadcast " + to_string(b) + " into " +
                         to_string(a));
  }
  const Index na = numel(a);
  const Index nb = numel(b);
  if (nb == 1) {
    p.kind = BroadcastKind::kScalar;
    return p;
  }
  // Pad b with leading ones.
  Shape bp(a.size() - b.size(), 1);
  bp.insert(bp.end(), b.begin(), b.end());
  // Row tile: b = [1.., a_k..a_end].
  {
    std::size_t k = 0;
    while (k < bp.size() && bp[k] == 1) ++k;
    bool ok = true;
    for (std::size_t i = k; i < bp.size(); ++i) ok = ok && bp[i] == a[i];
    if (ok) {
      p.kind = BroadcastKind::kRowTile;
      p.inner = nb;
      p.outer = na / nb;
      return p;
    }
  }
  // Column: b = [a_0..a_k, 1..].
  {
    std::size_t k = bp.size();
    while (k > 0 && bp[k - 1] == 1) --k;
    bool ok = true;
    for (std::size_t i = 0; i < k; ++i) ok = ok && bp[i] == a[i];
    if (ok) {
      p.kind = BroadcastKind::kColumn;
      p.outer = nb;
      p.inner = na / nb;
      return p;
    }
  }
  p.kind = BroadcastKind::kGeneral;
  const std::size_t r = a.size();
  std::vector<Index> bstride(r, 0);
  Index s = 1;
  for (std::size_t i = r; i-- > 0;) {
    bstride[i] = bp[i] == 1 ? 0 : s;
    s *= bp[i];
  }
  p.map.resize(static_cast<std::size_t>(na));
  std::vector<Index> idx(r, 0);
  for (Index flat = 0; flat < na; ++flat) {
    Index bi = 0;
    for (std::size_t i = 0; i < r; ++i) bi += idx[i] * bstride[i];
    p.map[static_cast<std::size_t>(flat)] = bi;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < a[i]) break;
      idx[i] = 0;
    }
  }
  return p;
}

// Expands b's values to a's size.
Vector expand(const Broadcast& p, const Vector& b, Index na) {
  switch (p.kind) {
    case BroadcastKind::kSame:
      return b;
    case BroadcastKind::kScalar:
      return Vector::Constant(na, b[0]);
    case BroadcastKind::kRowTile: {
      Vector out(na);
      MatrixMap m(out.data(), p.outer, p.inner);
      m.rowwise() = Eigen::Map<const RowVector>(b.data(), p.inner);
      return out;
    }
    case BroadcastKind::kColumn: {
      Vector out(na);
      MatrixMap m(out.data(), p.outer, p.inner);
      m.colwise() = b;
      return out;
    }
    case BroadcastKind::kGeneral: {
      Vector out(na);
      for (Index i = 0; i < na; ++i) out[i] = b[p.map[static_cast<std::size_t>(i)]];
      return out;
    }
  }
  return b;
}

// Sums an a-sized gradient back down to b's size.
Vector reduce(const Broadcast& p, const Vector& g, Index nb) {
  switch (p.kind) {
    case BroadcastKind::kSame:
      return g;
    case BroadcastKind::kScalar:
      return Vector::Constant(1, g.sum());
    case BroadcastKind::kRowTile: {
      ConstMatrixMap m(g.data(), p.outer, p.inner);
      return m.colwise().sum().transpose();
    }
    case BroadcastKind::kColumn: {
      ConstMatrixMap m(g.data(), p.outer, p.inner);
      return m.rowwise().sum();
    }
    case BroadcastKind::kGeneral: {
      Vector out = Vector::Zero(nb);
      for (Index i = 0; i < g.size(); ++i) out[p.map[static_cast<std::size_t>(i)]] += g[i];
      return out;
    }
  }
  return g;
}

enum class BinOp { kAdd, kSub, kMul, kDiv };

Tensor binary(const Tensor& a, const Tensor& b, BinOp op) {
  static constexpr const char* kNames[] = {"add", "sub", "mul", "div"};
  const char* name = kNames[static_cast<int>(op)];
  auto plan = std::make_shared<Broadcast>(plan_broadcast(a.shape(), b.shape(), name));
  const Index na = a.size();
  const Vector be = expand(*plan, b.values(), na);
  const auto av = a.values().array();
  Vector out;
  switch (op) {
    case BinOp::kAdd: out = av + be.array(); break;
    case BinOp::kSub: out = av - be.array(); break;
    case BinOp::kMul: out = av * be.array(); break;
    case BinOp::kDiv: out = av / be.array(); break;
  }
  const Index nb = b.size();
  return make_result(name, a.shape(), std::move(out), {a.node(), b.node()},
                     [plan, op, nb](Node& self) {
                       Node& pa = *self.parents[0];
                       Node& pb = *self.parents[1];
                       const Vector& g = self.grad;
                       switch (op) {
                         case BinOp::kAdd:
                           if (pa.requires_grad) pa.ensure_grad() += g;
                           if (pb.requires_grad) pb.ensure_grad() += reduce(*plan, g, nb);
                           break;
                         case BinOp::kSub:
                           if (pa.requires_grad) pa.ensure_grad() += g;
                           if (pb.requires_grad) pb.ensure_grad() -= reduce(*plan, g, nb);
                           break;
                         case BinOp::kMul: {
                           if (pa.requires_grad) {
                             const Vector be2 = expand(*plan, pb.value, g.size());
                             pa.ensure_grad().array() += g.array() * be2.array();
                           }
                           if (pb.requires_grad) {
                             const Vector ga = g.array() * pa.value.array();
                             pb.ensure_grad() += reduce(*plan, ga, nb);
                           }
                           break;
                         }
                         case BinOp::kDiv: {
                           const Vector be2 = expand(*plan, pb.value, g.size());
                           if (pa.requires_grad) pa.ensure_grad().array() += g.array() / be2.array();
                           if (pb.requires_grad) {
                             const Vector gb =
                                 -(g.array() * pa.value.array() / be2.array().square()).matrix();
                             pb.ensure_grad() += reduce(*plan, gb, nb);
                           }
                           break;
                         }
                       }
                     });
}

// Unary element-wise op given value and derivative functors of (x, y).
template <typename F, typename D>
Tensor unary(const char* name, const Tensor& a, F f, D dfdx) {
  Vector out = a.values().unaryExpr(f);
  return make_result(name, a.shape(), std::move(out), {a.node()}, [dfdx](Node& self) {
    Node& p = *self.parents[0];
    Vector& g = p.ensure_grad();
    for (Index i = 0; i < g.size(); ++i) g[i] += self.grad[i] * dfdx(p.value[i], self.value[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  if (!can_broadcast_into(a.shape(), b.shape()) && can_broadcast_into(b.shape(), a.shape())) {
    return binary(b, a, BinOp::kAdd);
  }
  return binary(a, b, BinOp::kAdd);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (!can_broadcast_into(a.shape(), b.shape()) && can_broadcast_into(b.shape(), a.shape())) {
    return neg(binary(b, a, BinOp::kSub));
  }
  return binary(a, b, BinOp::kSub);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (!can_broadcast_into(a.shape(), b.shape()) && can_broadcast_into(b.shape(), a.shape())) {
    return binary(b, a, BinOp::kMul);
  }
  return binary(a, b, BinOp::kMul);
}

Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kDiv); }

Tensor scale(const Tensor& a, double s) {
  Vector out = a.values() * s;
  return make_result("scale", a.shape(), std::move(out), {a.node()}, [s](Node& self) {
    self.parents[0]->ensure_grad() += self.grad * s;
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  Vector out = a.values().array() + s;
  return make_result("add_scalar", a.shape(), std::move(out), {a.node()},
                     [](Node& self) { self.parents[0]->ensure_grad() += self.grad; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

namespace {

// One vector-matrix product per row: a row's result never depends on how
// many rows are computed with it (a blocked GEMM may change rounding).
void row_products(const double* a, const double* b, double* o, Index rows, Index k, Index m) {
  ConstMatrixMap am(a, rows, k);
  ConstMatrixMap bm(b, k, m);
  MatrixMap om(o, rows, m);
  for (Index r = 0; r < rows; ++r) om.row(r).noalias() = am.row(r) * bm;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || bs.size() < 2) {
    throw DimensionError("matmul needs rank >= 2 operands, got " + to_string(as) + " and " +
                         to_string(bs));
  }
  const Index k = as.back();
  const Index n = as[as.size() - 2];
  if (bs[bs.size() - 2] != k) {
    throw DimensionError("matmul inner extents differ: " + to_string(as) + " x " + to_string(bs));
  }
  const Index m = bs.back();
  const bool batched = bs.size() > 2;
  Index batches = 1;
  if (batched) {
    if (as.size() != bs.size() || !std::equal(as.begin(), as.end() - 2, bs.begin())) {
      throw DimensionError("batched matmul needs equal leading extents: " + to_string(as) +
                           " x " + to_string(bs));
    }
    for (std::size_t i = 0; i + 2 < as.size(); ++i) batches *= as[i];
  }
  const Index rows = a.size() / k;
  Shape out_shape(as.begin(), as.end() - 1);
  out_shape.push_back(m);
  Vector out(rows * m);
  {
    const double* ap = a.values().data();
    const double* bp = b.values().data();
    if (!batched) {
      row_products(ap, bp, out.data(), rows, k, m);
    } else {
      for (Index bi = 0; bi < batches; ++bi) {
        row_products(ap + bi * n * k, bp + bi * k * m, out.data() + bi * n * m, n, k, m);
      }
    }
  }
  return make_result("matmul", std::move(out_shape), std::move(out), {a.node(), b.node()},
                     [rows, n, k, m, batched, batches](Node& self) {
                       Node& pa = *self.parents[0];
                       Node& pb = *self.parents[1];
                       ConstMatrixMap g(self.grad.data(), rows, m);
                       ConstMatrixMap am(pa.value.data(), rows, k);
                       if (!batched) {
                         ConstMatrixMap bm(pb.value.data(), k, m);
                         if (pa.requires_grad) {
                           MatrixMap ga(pa.ensure_grad().data(), rows, k);
                           ga.noalias() += g * bm.transpose();
                         }
                         if (pb.requires_grad) {
                           MatrixMap gb(pb.ensure_grad().data(), k, m);
                           gb.noalias() += am.transpose() * g;
                         }
                         return;
                       }
                       for (Index bi = 0; bi < batches; ++bi) {
                         ConstMatrixMap bm(pb.value.data() + bi * k * m, k, m);
                         auto gblk = g.middleRows(bi * n, n);
                         if (pa.requires_grad) {
                           MatrixMap ga(pa.ensure_grad().data() + bi * n * k, n, k);
                           ga.noalias() += gblk * bm.transpose();
                         }
                         if (pb.requires_grad) {
                           MatrixMap gb(pb.ensure_grad().data() + bi * k * m, k, m);
                           gb.noalias() += am.middleRows(bi * n, n).transpose() * gblk;
                         }
                       }
                     });
}

Tensor transpose(const Tensor& a) {
  const Shape& s = a.shape();
  if (s.size() < 2) throw DimensionError("transpose needs rank >= 2, got " + to_string(s));
  const Index r = s[s.size() - 2];
  const Index c = s.back();
  const Index batches = a.size() / (r * c);
  Shape out_shape = s;
  std::swap(out_shape[s.size() - 2], out_shape[s.size() - 1]);
  Vector out(a.size());
  for (Index bi = 0; bi < batches; ++bi) {
    ConstMatrixMap src(a.values().data() + bi * r * c, r, c);
    MatrixMap dst(out.data() + bi * r * c, c, r);
    dst = src.transpose();
  }
  return make_result("transpose", std::move(out_shape), std::move(out), {a.node()},
                     [r, c, batches](Node& self) {
                       Vector& g = self.parents[0]->ensure_grad();
                       for (Index bi = 0; bi < batches; ++bi) {
                         ConstMatrixMap src(self.grad.data() + bi * r * c, c, r);
                         MatrixMap dst(g.data() + bi * r * c, r, c);
                         dst += src.transpose();
                       }
                     });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw DimensionError("reshape " + to_string(a.shape()) + " -> " + to_string(shape) +
                         " changes the element count");
  }
  Vector out = a.values();
  return make_result("reshape", std::move(shape), std::move(out), {a.node()},
                     [](Node& self) { self.parents[0]->ensure_grad() += self.grad; });
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
  auto plan = std::make_shared<Broadcast>(plan_broadcast(shape, a.shape(), "broadcast_to"));
  const Index n = numel(shape);
  Vector out = expand(*plan, a.values(), n);
  const Index na = a.size();
  return make_result("broadcast_to", shape, std::move(out), {a.node()}, [plan, na](Node& self) {
    self.parents[0]->ensure_grad() += reduce(*plan, self.grad, na);
  });
}

Tensor concat(std::span<const Tensor> parts, Index axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  const Shape& s0 = parts[0].shape();
  axis = norm_axis(axis, static_cast<Index>(s0.size()), "concat");
  Shape out_shape = s0;
  out_shape[static_cast<std::size_t>(axis)] = 0;
  std::vector<Index> lens;
  for (const Tensor& t : parts) {
    const Shape& s = t.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) {
      ok = static_cast<Index>(i) == axis || s[i] == s0[i];
    }
    if (!ok) {
      throw DimensionError("concat: shape " + to_string(s) + " incompatible with " + to_string(s0));
    }
    lens.push_back(s[static_cast<std::size_t>(axis)]);
    out_shape[static_cast<std::size_t>(axis)] += lens.back();
  }
  const AxisView v = axis_view(out_shape, axis);
  Vector out(numel(out_shape));
  std::vector<NodePtr> parents;
  Index offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Index w = lens[p] * v.inner;
    ConstMatrixMap src(parts[p].values().data(), v.outer, w);
    MatrixMap dst(out.data(), v.outer, v.len * v.inner);
    dst.middleCols(offset, w) = src;
    offset += w;
    parents.push_back(parts[p].node());
  }
  return make_result("concat", std::move(out_shape), std::move(out), std::move(parents),
                     [v, lens](Node& self) {
                       ConstMatrixMap g(self.grad.data(), v.outer, v.len * v.inner);
                       Index off = 0;
                       for (std::size_t p = 0; p < lens.size(); ++p) {
                         const Index w = lens[p] * v.inner;
                         Node& parent = *self.parents[p];
                         if (parent.requires_grad) {
                           MatrixMap gp(parent.ensure_grad().data(), v.outer, w);
                           gp += g.middleCols(off, w);
                         }
                         off += w;
                       }
                     });
}

Tensor slice(const Tensor& a, Index axis, Index start, Index length) {
  const Shape& s = a.shape();
  axis = norm_axis(axis, static_cast<Index>(s.size()), "slice");
  const AxisView v = axis_view(s, axis);
  if (start < 0 || length <= 0 || start + length > v.len) {
    throw DimensionError("slice [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") out of range for axis extent " +
                         std::to_string(v.len));
  }
  Shape out_shape = s;
  out_shape[static_cast<std::size_t>(axis)] = length;
  ConstMatrixMap src(a.values().data(), v.outer, v.len * v.inner);
  RowMatrix blk = src.middleCols(start * v.inner, length * v.inner);
  Vector out = Eigen::Map<const Vector>(blk.data(), blk.size());
  return make_result("slice", std::move(out_shape), std::move(out), {a.node()},
                     [v, start, length](Node& self) {
                       MatrixMap g(self.parents[0]->ensure_grad().data(), v.outer, v.len * v.inner);
                       g.middleCols(start * v.inner, length * v.inner) +=
                           ConstMatrixMap(self.grad.data(), v.outer, length * v.inner);
                     });
}

Tensor select(const Tensor& a, Index axis, Index index) {
  axis = norm_axis(axis, a.rank(), "select");
  Shape s = a.shape();
  s.erase(s.begin() + axis);
  return reshape(slice(a, axis, index, 1), std::move(s));
}

Tensor sum(const Tensor& a) {
  Vector out = Vector::Constant(1, a.values().sum());
  return make_result("sum", Shape{}, std::move(out), {a.node()},
                     [](Node& self) { self.parents[0]->ensure_grad().array() += self.grad[0]; });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor sum(const Tensor& a, Index axis, bool keepdim) {
  const Shape& s = a.shape();
  axis = norm_axis(axis, static_cast<Index>(s.size()), "sum");
  const AxisView v = axis_view(s, axis);
  Shape out_shape = s;
  if (keepdim) {
    out_shape[static_cast<std::size_t>(axis)] = 1;
  } else {
    out_shape.erase(out_shape.begin() + axis);
  }
  // Sequential accumulation along the axis keeps the summation order fixed.
  Vector out = Vector::Zero(v.outer * v.inner);
  const double* src = a.values().data();
  for (Index o = 0; o < v.outer; ++o) {
    for (Index l = 0; l < v.len; ++l) {
      for (Index i = 0; i < v.inner; ++i) {
        out[o * v.inner + i] += src[(o * v.len + l) * v.inner + i];
      }
    }
  }
  return make_result("sum_axis", std::move(out_shape), std::move(out), {a.node()}, [v](Node& self) {
    Vector& g = self.parents[0]->ensure_grad();
    for (Index o = 0; o < v.outer; ++o) {
      for (Index l = 0; l < v.len; ++l) {
        for (Index i = 0; i < v.inner; ++i) {
          g[(o * v.len + l) * v.inner + i] += self.grad[o * v.inner + i];
        }
      }
    }
  });
}

Tensor mean(const Tensor& a, Index axis, bool keepdim) {
  const Index len = a.dim(axis);
  return scale(sum(a, axis, keepdim), 1.0 / static_cast<double>(len));
}

Tensor sigmoid(const Tensor& a) {
  return unary("sigmoid", a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  if ((a.values().array() <= 0.0).any()) {
    throw DomainError("log of a non-positive value in tensor of shape " + to_string(a.shape()));
  }
  return unary("log", a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return unary("square", a, [](double x) { return x * x; },
               [](double x, double) { return 2.0 * x; });
}

Tensor sqrt(const Tensor& a) {
  if ((a.values().array() < 0.0).any()) {
    throw DomainError("sqrt of a negative value in tensor of shape " + to_string(a.shape()));
  }
  return unary("sqrt", a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return 0.5 / y; });
}

Tensor softmax(const Tensor& a) {
  if (a.rank() == 0) throw DimensionError("softmax needs rank >= 1");
  const Index cols = a.shape().back();
  const Index rows = a.size() / cols;
  Vector out(a.size());
  ConstMatrixMap x(a.values().data(), rows, cols);
  MatrixMap y(out.data(), rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const double mx = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - mx).exp();
    y.row(r) /= y.row(r).sum();
  }
  return make_result("softmax", a.shape(), std::move(out), {a.node()}, [rows, cols](Node& self) {
    ConstMatrixMap yv(self.value.data(), rows, cols);
    ConstMatrixMap g(self.grad.data(), rows, cols);
    MatrixMap gx(self.parents[0]->ensure_grad().data(), rows, cols);
    for (Index r = 0; r < rows; ++r) {
      const double dot = g.row(r).dot(yv.row(r));
      gx.row(r).array() += yv.row(r).array() * (g.row(r).array() - dot);
    }
  });
}

Tensor bce_with_logits(const Tensor& z, const Tensor& target) {
  if (z.size() != target.size()) {
    throw DimensionError("bce_with_logits: " + to_string(z.shape()) + " vs " +
                         to_string(target.shape()));
  }
  if (z.size() == 0) throw ContractError("bce_with_logits on empty input");
  const Vector& zv = z.values();
  const Vector& yv = target.values();
  double total = 0.0;
  for (Index i = 0; i < zv.size(); ++i) {
    const double x = zv[i];
    total += std::max(x, 0.0) - x * yv[i] + std::log1p(std::exp(-std::abs(x)));
  }
  const double n = static_cast<double>(zv.size());
  Vector out = Vector::Constant(1, total / n);
  Vector y = yv;
  return make_result("bce_with_logits", Shape{}, std::move(out), {z.node()},
                     [y = std::move(y), n](Node& self) {
                       Node& p = *self.parents[0];
                       Vector& g = p.ensure_grad();
                       const double s = self.grad[0] / n;
                       for (Index i = 0; i < g.size(); ++i) {
                         g[i] += s * (stable_sigmoid(p.value[i]) - y[i]);
                       }
                     });
}

Tensor snap_to_grid(const Tensor& a, int bits) {
  Vector out = a.values().unaryExpr([bits](double x) {
    return std::ldexp(std::nearbyint(std::ldexp(x, bits)), -bits);
  });
  return make_result("snap_to_grid", a.shape(), std::move(out), {a.node()},
                     [](Node& self) { self.parents[0]->ensure_grad() += self.grad; });
}

}  // namespace amn
