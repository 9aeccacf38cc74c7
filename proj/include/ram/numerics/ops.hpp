// SPDX-License-Identifier: Apache-2.0
// Differentiable primitives. Every op records itself on the tape of its inputs
// and throws ShapeError naming the primitive and the offending shapes.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ram/numerics/tape.hpp"

namespace ram::ops {

inline constexpr Real kLayerNormEps = Real(1e-5);

/// a[..., K] x b[K, N] -> [..., N]
Var matmul(const Var& a, const Var& b);
/// 2-D transpose.
Var transpose(const Var& a);

// Elementwise with suffix broadcasting: b's shape must equal a trailing run of a's shape.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, Real s);

Var square(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var gelu(const Var& a);
Var silu(const Var& a);

/// Normalizes the last axis, then applies gamma/beta of shape [last].
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, Real eps = kLayerNormEps);
/// Last-axis softmax with max subtraction.
Var softmax(const Var& x);
Var log_softmax(const Var& x);
/// Rows of the last axis scaled to unit L2 norm. Throws NumericError on a zero row.
Var l2_normalize(const Var& x);

/// Multi-head scaled dot-product attention over q/k/v of shape [B, L, W].
/// key_mask holds B*L flags; masked keys get zero weight and masked queries
/// produce zero rows. Each batch element needs at least one valid key.
Var attention(const Var& q, const Var& k, const Var& v, std::span<const std::uint8_t> key_mask, int heads);

/// table[V, D] rows picked by ids -> [ids.size(), D]
Var gather_rows(const Var& table, std::span<const std::int64_t> ids);
Var slice(const Var& x, int axis, std::int64_t start, std::int64_t length);
Var concat(const std::vector<Var>& parts, int axis);
Var reshape(const Var& x, Shape shape);

Var sum(const Var& x);
Var mean(const Var& x);
/// Sums the last axis away.
Var sum_last(const Var& x);

/// Identity forward; contributes nothing to the gradient of its input.
Var stop_gradient(const Var& x);

}  // namespace ram::ops
