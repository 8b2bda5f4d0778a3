// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "amn/tensor.hpp"

#include <span>
#include <vector>

namespace amn {

// Differentiable primitives. Binary element-wise ops broadcast the right
// operand into the left one: each of b's (trailing-aligned) extents must equal
// a's or be 1. add and mul are commutative and swap operands when needed;
// anything else that would need `a` to grow is rejected with DimensionError.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);

/// [..., N, K] x [K, M] -> [..., N, M], or batched [B, N, K] x [B, K, M].
/// Each output row is computed independently of the others, so results do
/// not depend on the batch size.
Tensor matmul(const Tensor& a, const Tensor& b);
/// Swaps the last two axes.
Tensor transpose(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
/// Repeats `a` along its size-1 (or missing leading) axes to reach `shape`.
Tensor broadcast_to(const Tensor& a, const Shape& shape);
Tensor concat(std::span<const Tensor> parts, Index axis);
Tensor slice(const Tensor& a, Index axis, Index start, Index length);
/// slice of length one with the axis removed.
Tensor select(const Tensor& a, Index axis, Index index);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum(const Tensor& a, Index axis, bool keepdim = false);
Tensor mean(const Tensor& a, Index axis, bool keepdim = false);

Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
/// Throws DomainError if any entry is <= 0.
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);
/// Throws DomainError if any entry is < 0.
Tensor sqrt(const Tensor& a);
/// Softmax over the last axis, max-subtracted.
Tensor softmax(const Tensor& a);

/// Mean binary cross-entropy of logits `z` against constant 0/1 `target`,
/// evaluated as max(z,0) - z*y + log1p(exp(-|z|)).
Tensor bce_with_logits(const Tensor& z, const Tensor& target);

/// Rounds values to the dyadic grid k * 2^-`bits`. Sums of snapped values of
/// moderate magnitude are exact in binary64. Gradient passes straight
/// through.
Tensor snap_to_grid(const Tensor& a, int bits);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator/(const Tensor& a, double s) { return scale(a, 1.0 / s); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return add_scalar(a, -s); }
inline Tensor operator+(double s, const Tensor& a) { return add_scalar(a, s); }
inline Tensor operator-(double s, const Tensor& a) { return add_scalar(neg(a), s); }

}  // namespace amn
