// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode autodiff over dense double tensors. Values are flat row-major
// buffers with an explicit shape; matrix ops view rank-1/2 tensors through
// Eigen maps. Each op records its parents and a backward closure; backward()
// runs the closures in reverse topological order.
//
// Tensors are immutable once produced by an op. The only sanctioned mutation
// is writing leaf values between steps (parameter updates, gradcheck nudges).

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "avdet/error.hpp"
#include "avdet/rng.hpp"
#include "avdet/types.hpp"

namespace avdet {

namespace detail {

struct TensorNode {
  Shape shape;
  Vec value;  // flat, row-major
  Vec grad;   // empty until first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward;  // accumulates into parents' grads

  Vec& ensure_grad() {
    if (grad.size() != value.size()) grad = Vec::Zero(value.size());
    return grad;
  }
};

}  // namespace detail

// Enabled by default; evaluation paths disable recording to skip graph
// bookkeeping they will never use.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real fill, bool requires_grad = false);
  static Tensor from_flat(Shape shape, Vec data, bool requires_grad = false);
  static Tensor from_matrix(const Mat& m, bool requires_grad = false);  // shape {rows, cols}
  static Tensor from_vector(const Vec& v, bool requires_grad = false);  // shape {n}
  static Tensor scalar(Real v, bool requires_grad = false);             // shape {1}
  static Tensor uniform(Shape shape, Real lo, Real hi, Rng& rng, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  Index numel() const { return node_->value.size(); }
  Index rank() const { return static_cast<Index>(node_->shape.size()); }
  bool requires_grad() const { return node_->requires_grad; }
  bool is_scalar() const { return numel() == 1; }

  Real item() const;

  // 2-D view: rank 1 maps to 1 x n, rank 2 to shape; higher ranks are not
  // viewable as matrices.
  Index view_rows() const;
  Index view_cols() const;
  Eigen::Map<const Mat> matrix() const;
  const Vec& flat() const { return node_->value; }

  /// Mutable access to a leaf's values (parameter update, finite differences).
  Vec& leaf_values();

  bool has_grad() const { return node_->grad.size() == numel(); }
  const Vec& grad() const;
  Eigen::Map<const Mat> grad_matrix() const;
  void zero_grad();

  // Graph internals, used by ops and the backward pass.
  std::shared_ptr<detail::TensorNode> node() const { return node_; }
  static Tensor make_op(const char* op, Shape shape, Vec value,
                        std::vector<Tensor> parents,
                        std::function<void(detail::TensorNode&)> backward);

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}

  std::shared_ptr<detail::TensorNode> node_;
};

/// Backpropagates from a scalar root: seeds d(root)/d(root) = 1 and runs all
/// recorded closures in reverse topological order. Throws NumericError if any
/// produced gradient is non-finite.
void backward(const Tensor& root);

}  // namespace avdet
