// SPDX-License-Identifier: Apache-2.0
//
// Differentiable free functions over Tensor. Every op validates shapes,
// checks its output for non-finite values, and registers a backward closure.

#pragma once

#include <span>

#include "avdet/tensor.hpp"

namespace avdet {

/// Matrix product. Rank-1 operands are promoted (lhs to 1 x n, rhs to n x 1)
/// and the promoted axes are squeezed from the result.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& x);  // rank 2

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, Real c);

/// Elementwise division by a constant. Unlike scale(x, 1/c) this divides,
/// so x/c is correctly rounded (n identical values averaged by div_by(sum, n)
/// reproduce the value exactly).
Tensor div_by(const Tensor& x, Real divisor);

/// Product of a one-element tensor and an arbitrary tensor; gradient flows to
/// both factors.
Tensor scalar_mul(const Tensor& s, const Tensor& x);

/// Adds a length-C vector to every row of an R x C matrix.
Tensor add_row(const Tensor& m, const Tensor& row);

/// Softmax over the last axis, internally shifted by the row max. Rows sum to
/// one and every entry is strictly positive.
Tensor softmax(const Tensor& x);

/// Normalizes the last axis to zero mean / unit (biased) variance, then
/// applies the affine pair. gamma and beta have the last-axis length.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps);

Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& x, Index start, Index count);
Tensor slice_cols(const Tensor& x, Index start, Index count);

/// Same flat data under a new shape (copying).
Tensor reshape(const Tensor& x, Shape shape);

Tensor sigmoid(const Tensor& x);
Tensor gelu(const Tensor& x);

/// log(max(x, floor)); gradient is zero where the floor binds.
Tensor log_floored(const Tensor& x, Real floor_value);

Tensor mean_all(const Tensor& x);  // shape {1}

/// Windowed frames of a rank-1 signal: out[i, j] = window[j] * x[i*hop + j],
/// with floor((N - len)/hop) + 1 frames. Throws EmptyInputError if the signal
/// is shorter than one frame.
Tensor frame_rows(const Tensor& signal, Index frame_len, Index hop, const Vec& window);

/// Numerically stable binary cross-entropy on a logit (shape {1});
/// target is 0 or 1.
Tensor bce_with_logits(const Tensor& logit, Real target);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }

}  // namespace avdet
