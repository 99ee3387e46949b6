// SPDX-License-Identifier: Apache-2.0

#include "avdet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>
#include <utility>

#include "avdet/ops.hpp"

namespace avdet {

namespace {

thread_local bool g_grad_enabled = true;

void ensure_finite(const Vec& v, const char* what) {
  if (!v.allFinite()) throw NumericError(std::string(what) + " produced a non-finite value");
}

Eigen::Map<Mat> map2d(Vec& data, Index rows, Index cols) {
  return Eigen::Map<Mat>(data.data(), rows, cols);
}

Eigen::Map<const Mat> map2d(const Vec& data, Index rows, Index cols) {
  return Eigen::Map<const Mat>(data.data(), rows, cols);
}

// 2-D view extents for ranks 0..2.
std::pair<Index, Index> view_dims(const Shape& s) {
  if (s.size() > 2) throw ShapeError("tensor of shape " + shape_str(s) + " has no matrix view");
  if (s.size() == 2) return {s[0], s[1]};
  if (s.size() == 1) return {1, s[0]};
  return {1, 1};
}

// Last-axis view: (numel / last, last), valid for any rank >= 1.
std::pair<Index, Index> rowwise_dims(const Shape& s, Index numel) {
  if (s.empty() || numel == 0) throw ShapeError("rowwise view of empty tensor");
  const Index last = s.back();
  return {numel / last, last};
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return from_flat(std::move(shape), Vec(), requires_grad);
}

Tensor Tensor::full(Shape shape, Real fill, bool requires_grad) {
  Vec v = Vec::Constant(shape_numel(shape), fill);
  return from_flat(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::from_flat(Shape shape, Vec data, bool requires_grad) {
  const Index n = shape_numel(shape);
  if (n <= 0) throw ShapeError("tensor shape " + shape_str(shape) + " is empty");
  if (data.size() == 0) data = Vec::Zero(n);
  if (data.size() != n) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_str(shape));
  }
  ensure_finite(data, "leaf");
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from_matrix(const Mat& m, bool requires_grad) {
  Vec flat(m.size());
  map2d(flat, m.rows(), m.cols()) = m;
  return from_flat({m.rows(), m.cols()}, std::move(flat), requires_grad);
}

Tensor Tensor::from_vector(const Vec& v, bool requires_grad) {
  return from_flat({v.size()}, v, requires_grad);
}

Tensor Tensor::scalar(Real v, bool requires_grad) {
  Vec d(1);
  d[0] = v;
  return from_flat({1}, std::move(d), requires_grad);
}

Tensor Tensor::uniform(Shape shape, Real lo, Real hi, Rng& rng, bool requires_grad) {
  Vec d(shape_numel(shape));
  for (Index i = 0; i < d.size(); ++i) d[i] = rng.uniform(lo, hi);
  return from_flat(std::move(shape), std::move(d), requires_grad);
}

Real Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

Index Tensor::view_rows() const { return view_dims(node_->shape).first; }
Index Tensor::view_cols() const { return view_dims(node_->shape).second; }

Eigen::Map<const Mat> Tensor::matrix() const {
  auto [r, c] = view_dims(node_->shape);
  return map2d(std::as_const(node_->value), r, c);
}

Vec& Tensor::leaf_values() {
  if (node_->backward) throw NumericError("leaf_values() on an op result");
  return node_->value;
}

const Vec& Tensor::grad() const {
  if (!has_grad()) throw NumericError("gradient not populated; run backward() first");
  return node_->grad;
}

Eigen::Map<const Mat> Tensor::grad_matrix() const {
  auto [r, c] = view_dims(node_->shape);
  return map2d(grad(), r, c);
}

void Tensor::zero_grad() { node_->grad.resize(0); }

Tensor Tensor::make_op(const char* op, Shape shape, Vec value, std::vector<Tensor> parents,
                       std::function<void(detail::TensorNode&)> bw) {
  if (value.size() != shape_numel(shape)) {
    throw ShapeError(std::string(op) + ": result buffer does not match shape");
  }
  ensure_finite(value, op);
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  if (g_grad_enabled) {
    for (const Tensor& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (Tensor& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(bw);
  }
  return Tensor(std::move(node));
}

void backward(const Tensor& root) {
  if (!root.defined()) throw ShapeError("backward on undefined tensor");
  if (root.numel() != 1) {
    throw ShapeError("backward root must be scalar, got " + shape_str(root.shape()));
  }
  using detail::TensorNode;

  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  struct Frame {
    TensorNode* n;
    size_t next;
  };
  std::vector<Frame> stack;
  stack.push_back({root.node().get(), 0});
  visited.insert(root.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      TensorNode* p = f.n->parents[f.next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  root.node()->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward && n->grad.size() == n->value.size()) n->backward(*n);
  }
  for (TensorNode* n : order) {
    if (n->grad.size() && !n->grad.allFinite()) {
      throw NumericError(std::string("backward through ") + n->op +
                         " produced a non-finite gradient");
    }
  }
}

// ---------------------------------------------------------------------------
// ops
// ---------------------------------------------------------------------------

namespace {

Vec& parent_grad(detail::TensorNode& out, size_t i) { return out.parents[i]->ensure_grad(); }

bool parent_needs(detail::TensorNode& out, size_t i) { return out.parents[i]->requires_grad; }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() > 2 || b.rank() > 2) throw ShapeError("matmul requires rank <= 2 operands");
  const bool a_vec = a.rank() == 1;
  const bool b_vec = b.rank() == 1;
  const Index m = a_vec ? 1 : a.shape()[0];
  const Index k = a_vec ? a.shape()[0] : a.shape()[1];
  const Index k2 = b_vec ? b.shape()[0] : b.shape()[0];
  const Index n = b_vec ? 1 : b.shape()[1];
  if (k != k2) {
    throw ShapeError("matmul inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  Vec out(m * n);
  map2d(out, m, n).noalias() = map2d(a.flat(), m, k) * map2d(b.flat(), k, n);

  Shape out_shape;
  if (a_vec && b_vec) {
    out_shape = {1};
  } else if (a_vec) {
    out_shape = {n};
  } else if (b_vec) {
    out_shape = {m};
  } else {
    out_shape = {m, n};
  }

  auto bw = [m, k, n](detail::TensorNode& o) {
    auto dy = map2d(o.grad, m, n);
    const Vec& av = o.parents[0]->value;
    const Vec& bv = o.parents[1]->value;
    if (parent_needs(o, 0)) {
      map2d(parent_grad(o, 0), m, k).noalias() += dy * map2d(bv, k, n).transpose();
    }
    if (parent_needs(o, 1)) {
      map2d(parent_grad(o, 1), k, n).noalias() += map2d(av, m, k).transpose() * dy;
    }
  };
  return Tensor::make_op("matmul", std::move(out_shape), std::move(out), {a, b}, bw);
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("transpose requires a rank-2 tensor");
  const Index r = x.shape()[0], c = x.shape()[1];
  Vec out(r * c);
  map2d(out, c, r) = map2d(x.flat(), r, c).transpose();
  auto bw = [r, c](detail::TensorNode& o) {
    if (parent_needs(o, 0)) {
      map2d(parent_grad(o, 0), r, c) += map2d(o.grad, c, r).transpose();
    }
  };
  return Tensor::make_op("transpose", {c, r}, std::move(out), {x}, bw);
}

namespace {

Tensor elementwise_binary(const char* name, const Tensor& a, const Tensor& b,
                          const std::function<void(const Vec&, const Vec&, Vec&)>& fwd,
                          std::function<void(detail::TensorNode&)> bw) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(name) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " differ");
  }
  Vec out(a.numel());
  fwd(a.flat(), b.flat(), out);
  return Tensor::make_op(name, a.shape(), std::move(out), {a, b}, std::move(bw));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise_binary(
      "add", a, b, [](const Vec& x, const Vec& y, Vec& o) { o = x + y; },
      [](detail::TensorNode& o) {
        if (parent_needs(o, 0)) parent_grad(o, 0) += o.grad;
        if (parent_needs(o, 1)) parent_grad(o, 1) += o.grad;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise_binary(
      "sub", a, b, [](const Vec& x, const Vec& y, Vec& o) { o = x - y; },
      [](detail::TensorNode& o) {
        if (parent_needs(o, 0)) parent_grad(o, 0) += o.grad;
        if (parent_needs(o, 1)) parent_grad(o, 1) -= o.grad;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise_binary(
      "mul", a, b,
      [](const Vec& x, const Vec& y, Vec& o) { o = x.cwiseProduct(y); },
      [](detail::TensorNode& o) {
        if (parent_needs(o, 0)) parent_grad(o, 0) += o.grad.cwiseProduct(o.parents[1]->value);
        if (parent_needs(o, 1)) parent_grad(o, 1) += o.grad.cwiseProduct(o.parents[0]->value);
      });
}

Tensor scale(const Tensor& x, Real c) {
  Vec out = x.flat() * c;
  auto bw = [c](detail::TensorNode& o) {
    if (parent_needs(o, 0)) parent_grad(o, 0) += c * o.grad;
  };
  return Tensor::make_op("scale", x.shape(), std::move(out), {x}, bw);
}

Tensor div_by(const Tensor& x, Real divisor) {
  if (divisor == 0) throw NumericError("div_by zero divisor");
  Vec out = x.flat() / divisor;
  auto bw = [divisor](detail::TensorNode& o) {
    if (parent_needs(o, 0)) parent_grad(o, 0) += o.grad / divisor;
  };
  return Tensor::make_op("div_by", x.shape(), std::move(out), {x}, bw);
}

Tensor scalar_mul(const Tensor& s, const Tensor& x) {
  if (s.numel() != 1) throw ShapeError("scalar_mul: first operand must have one element");
  Vec out = x.flat() * s.flat()[0];
  auto bw = [](detail::TensorNode& o) {
    const Real sv = o.parents[0]->value[0];
    const Vec& xv = o.parents[1]->value;
    if (parent_needs(o, 0)) parent_grad(o, 0)[0] += o.grad.dot(xv);
    if (parent_needs(o, 1)) parent_grad(o, 1) += sv * o.grad;
  };
  return Tensor::make_op("scalar_mul", x.shape(), std::move(out), {s, x}, bw);
}

Tensor add_row(const Tensor& m, const Tensor& row) {
  if (m.rank() != 2) throw ShapeError("add_row: matrix operand must be rank 2");
  const Index r = m.shape()[0], c = m.shape()[1];
  if (row.numel() != c) {
    throw ShapeError("add_row: row length " + std::to_string(row.numel()) +
                     " does not match column count " + std::to_string(c));
  }
  Vec out(m.numel());
  map2d(out, r, c) = map2d(m.flat(), r, c).rowwise() +
                     Eigen::Map<const Eigen::RowVectorXd>(row.flat().data(), c);
  auto bw = [r, c](detail::TensorNode& o) {
    auto dy = map2d(o.grad, r, c);
    if (parent_needs(o, 0)) map2d(parent_grad(o, 0), r, c) += dy;
    if (parent_needs(o, 1)) {
      Eigen::Map<Eigen::RowVectorXd>(parent_grad(o, 1).data(), c) += dy.colwise().sum();
    }
  };
  return Tensor::make_op("add_row", m.shape(), std::move(out), {m, row}, bw);
}

Tensor softmax(const Tensor& x) {
  auto [r, c] = rowwise_dims(x.shape(), x.numel());
  Vec out(x.numel());
  auto xv = map2d(x.flat(), r, c);
  auto yv = map2d(out, r, c);
  for (Index i = 0; i < r; ++i) {
    const Real mx = xv.row(i).maxCoeff();
    yv.row(i) = (xv.row(i).array() - mx).exp();
    yv.row(i) /= yv.row(i).sum();
  }
  auto bw = [r, c](detail::TensorNode& o) {
    if (!parent_needs(o, 0)) return;
    auto dy = map2d(o.grad, r, c);
    auto y = map2d(o.value, r, c);
    auto dx = map2d(parent_grad(o, 0), r, c);
    for (Index i = 0; i < r; ++i) {
      const Real dot = dy.row(i).cwiseProduct(y.row(i)).sum();
      dx.row(i) += y.row(i).cwiseProduct((dy.row(i).array() - dot).matrix());
    }
  };
  return Tensor::make_op("softmax", x.shape(), std::move(out), {x}, bw);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps) {
  if (eps <= 0) throw ConfigError("layer_norm eps must be positive");
  auto [r, c] = rowwise_dims(x.shape(), x.numel());
  if (gamma.numel() != c || beta.numel() != c) {
    throw ShapeError("layer_norm: affine parameters must have the last-axis length");
  }
  Vec out(x.numel());
  Mat xhat(r, c);
  Vec inv_std(r);
  auto xv = map2d(x.flat(), r, c);
  auto yv = map2d(out, r, c);
  auto g = Eigen::Map<const Eigen::RowVectorXd>(gamma.flat().data(), c);
  auto bta = Eigen::Map<const Eigen::RowVectorXd>(beta.flat().data(), c);
  for (Index i = 0; i < r; ++i) {
    const Real mu = xv.row(i).mean();
    const Real var = (xv.row(i).array() - mu).square().mean();
    inv_std[i] = Real(1) / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mu) * inv_std[i];
    yv.row(i) = xhat.row(i).cwiseProduct(g) + bta;
  }
  auto bw = [r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::TensorNode& o) {
    auto dy = map2d(o.grad, r, c);
    auto gv = Eigen::Map<const Eigen::RowVectorXd>(o.parents[1]->value.data(), c);
    if (parent_needs(o, 0)) {
      auto dx = map2d(parent_grad(o, 0), r, c);
      for (Index i = 0; i < r; ++i) {
        Eigen::RowVectorXd dxhat = dy.row(i).cwiseProduct(gv);
        const Real m1 = dxhat.mean();
        const Real m2 = dxhat.cwiseProduct(xhat.row(i)).mean();
        dx.row(i) +=
            inv_std[i] * (dxhat.array() - m1 - xhat.row(i).array() * m2).matrix();
      }
    }
    if (parent_needs(o, 1)) {
      Eigen::Map<Eigen::RowVectorXd> dg(parent_grad(o, 1).data(), c);
      for (Index i = 0; i < r; ++i) dg += dy.row(i).cwiseProduct(xhat.row(i));
    }
    if (parent_needs(o, 2)) {
      Eigen::Map<Eigen::RowVectorXd> db(parent_grad(o, 2).data(), c);
      db += dy.colwise().sum();
    }
  };
  return Tensor::make_op("layer_norm", x.shape(), std::move(out), {x, gamma, beta}, bw);
}

namespace {

Tensor concat_impl(const char* name, std::span<const Tensor> parts, bool by_rows) {
  if (parts.empty()) throw ShapeError(std::string(name) + ": nothing to concatenate");
  Index rows = parts[0].view_rows(), cols = parts[0].view_cols();
  Index total = 0;
  for (const Tensor& p : parts) {
    if (by_rows) {
      if (p.view_cols() != cols) throw ShapeError(std::string(name) + ": column counts differ");
      total += p.view_rows();
    } else {
      if (p.view_rows() != rows) throw ShapeError(std::string(name) + ": row counts differ");
      total += p.view_cols();
    }
  }
  const Index out_r = by_rows ? total : rows;
  const Index out_c = by_rows ? cols : total;
  Vec out(out_r * out_c);
  auto ov = map2d(out, out_r, out_c);
  Index at = 0;
  for (const Tensor& p : parts) {
    if (by_rows) {
      ov.middleRows(at, p.view_rows()) = p.matrix();
      at += p.view_rows();
    } else {
      ov.middleCols(at, p.view_cols()) = p.matrix();
      at += p.view_cols();
    }
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  std::vector<std::pair<Index, Index>> spans;  // (offset, extent) per parent
  at = 0;
  for (const Tensor& p : parts) {
    const Index ext = by_rows ? p.view_rows() : p.view_cols();
    spans.emplace_back(at, ext);
    at += ext;
  }
  auto bw = [out_r, out_c, by_rows, spans](detail::TensorNode& o) {
    auto dy = map2d(o.grad, out_r, out_c);
    for (size_t i = 0; i < o.parents.size(); ++i) {
      if (!parent_needs(o, i)) continue;
      auto [off, ext] = spans[i];
      const Index pr = by_rows ? ext : out_r;
      const Index pc = by_rows ? out_c : ext;
      if (by_rows) {
        map2d(parent_grad(o, i), pr, pc) += dy.middleRows(off, ext);
      } else {
        map2d(parent_grad(o, i), pr, pc) += dy.middleCols(off, ext);
      }
    }
  };
  return Tensor::make_op(name, {out_r, out_c}, std::move(out), std::move(parents), bw);
}

}  // namespace

Tensor concat_rows(std::span<const Tensor> parts) { return concat_impl("concat_rows", parts, true); }
Tensor concat_cols(std::span<const Tensor> parts) { return concat_impl("concat_cols", parts, false); }

namespace {

Tensor slice_impl(const char* name, const Tensor& x, Index start, Index count, bool by_rows) {
  if (x.rank() != 2) throw ShapeError(std::string(name) + " requires a rank-2 tensor");
  const Index r = x.shape()[0], c = x.shape()[1];
  const Index extent = by_rows ? r : c;
  if (start < 0 || count <= 0 || start + count > extent) {
    throw ShapeError(std::string(name) + ": range [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") outside extent " + std::to_string(extent));
  }
  const Index out_r = by_rows ? count : r;
  const Index out_c = by_rows ? c : count;
  Vec out(out_r * out_c);
  if (by_rows) {
    map2d(out, out_r, out_c) = map2d(x.flat(), r, c).middleRows(start, count);
  } else {
    map2d(out, out_r, out_c) = map2d(x.flat(), r, c).middleCols(start, count);
  }
  auto bw = [r, c, start, count, by_rows, out_r, out_c](detail::TensorNode& o) {
    if (!parent_needs(o, 0)) return;
    auto dx = map2d(parent_grad(o, 0), r, c);
    auto dy = map2d(o.grad, out_r, out_c);
    if (by_rows) {
      dx.middleRows(start, count) += dy;
    } else {
      dx.middleCols(start, count) += dy;
    }
  };
  return Tensor::make_op(name, {out_r, out_c}, std::move(out), {x}, bw);
}

}  // namespace

Tensor slice_rows(const Tensor& x, Index start, Index count) {
  return slice_impl("slice_rows", x, start, count, true);
}

Tensor slice_cols(const Tensor& x, Index start, Index count) {
  return slice_impl("slice_cols", x, start, count, false);
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape) +
                     " changes element count");
  }
  Vec out = x.flat();
  auto bw = [](detail::TensorNode& o) {
    if (parent_needs(o, 0)) parent_grad(o, 0) += o.grad;
  };
  return Tensor::make_op("reshape", std::move(shape), std::move(out), {x}, bw);
}

Tensor sigmoid(const Tensor& x) {
  Vec out(x.numel());
  for (Index i = 0; i < out.size(); ++i) {
    const Real v = x.flat()[i];
    out[i] = v >= 0 ? Real(1) / (Real(1) + std::exp(-v))
                    : std::exp(v) / (Real(1) + std::exp(v));
  }
  auto bw = [](detail::TensorNode& o) {
    if (!parent_needs(o, 0)) return;
    parent_grad(o, 0).array() +=
        o.grad.array() * o.value.array() * (1.0 - o.value.array());
  };
  return Tensor::make_op("sigmoid", x.shape(), std::move(out), {x}, bw);
}

Tensor gelu(const Tensor& x) {
  constexpr Real kInvSqrt2 = 0.70710678118654752440;
  Vec out(x.numel());
  for (Index i = 0; i < out.size(); ++i) {
    const Real v = x.flat()[i];
    out[i] = Real(0.5) * v * (Real(1) + std::erf(v * kInvSqrt2));
  }
  auto bw = [](detail::TensorNode& o) {
    if (!parent_needs(o, 0)) return;
    constexpr Real kInvSqrt2Pi = 0.39894228040143267794;
    Vec& dx = parent_grad(o, 0);
    const Vec& xv = o.parents[0]->value;
    for (Index i = 0; i < dx.size(); ++i) {
      const Real v = xv[i];
      const Real cdf = Real(0.5) * (Real(1) + std::erf(v * 0.70710678118654752440));
      const Real pdf = kInvSqrt2Pi * std::exp(Real(-0.5) * v * v);
      dx[i] += o.grad[i] * (cdf + v * pdf);
    }
  };
  return Tensor::make_op("gelu", x.shape(), std::move(out), {x}, bw);
}

Tensor log_floored(const Tensor& x, Real floor_value) {
  if (floor_value <= 0) throw ConfigError("log_floored requires a positive floor");
  Vec out(x.numel());
  for (Index i = 0; i < out.size(); ++i) out[i] = std::log(std::max(x.flat()[i], floor_value));
  auto bw = [floor_value](detail::TensorNode& o) {
    if (!parent_needs(o, 0)) return;
    Vec& dx = parent_grad(o, 0);
    const Vec& xv = o.parents[0]->value;
    for (Index i = 0; i < dx.size(); ++i) {
      if (xv[i] > floor_value) dx[i] += o.grad[i] / xv[i];
    }
  };
  return Tensor::make_op("log_floored", x.shape(), std::move(out), {x}, bw);
}

Tensor mean_all(const Tensor& x) {
  Vec out(1);
  out[0] = x.flat().mean();
  const Real inv_n = Real(1) / static_cast<Real>(x.numel());
  auto bw = [inv_n](detail::TensorNode& o) {
    if (parent_needs(o, 0)) parent_grad(o, 0).array() += o.grad[0] * inv_n;
  };
  return Tensor::make_op("mean_all", {1}, std::move(out), {x}, bw);
}

Tensor frame_rows(const Tensor& signal, Index frame_len, Index hop, const Vec& window) {
  if (signal.rank() != 1) throw ShapeError("frame_rows expects a rank-1 signal");
  if (frame_len <= 0 || hop <= 0 || frame_len < hop) {
    throw ConfigError("frame_rows requires frame_len >= hop > 0");
  }
  if (window.size() != frame_len) throw ShapeError("frame_rows: window length != frame length");
  const Index n = signal.numel();
  if (n < frame_len) {
    throw EmptyInputError("signal of " + std::to_string(n) + " samples is shorter than one frame");
  }
  const Index frames = (n - frame_len) / hop + 1;
  Vec out(frames * frame_len);
  auto ov = map2d(out, frames, frame_len);
  for (Index i = 0; i < frames; ++i) {
    ov.row(i) = signal.flat().segment(i * hop, frame_len).transpose().cwiseProduct(
        window.transpose());
  }
  auto bw = [frames, frame_len, hop, window](detail::TensorNode& o) {
    if (!parent_needs(o, 0)) return;
    Vec& dx = parent_grad(o, 0);
    auto dy = map2d(o.grad, frames, frame_len);
    for (Index i = 0; i < frames; ++i) {
      dx.segment(i * hop, frame_len) += dy.row(i).transpose().cwiseProduct(window);
    }
  };
  return Tensor::make_op("frame_rows", {frames, frame_len}, std::move(out), {signal}, bw);
}

Tensor bce_with_logits(const Tensor& logit, Real target) {
  if (logit.numel() != 1) throw ShapeError("bce_with_logits expects a single logit");
  if (target != Real(0) && target != Real(1)) {
    throw ConfigError("bce_with_logits target must be 0 or 1");
  }
  const Real z = logit.flat()[0];
  Vec out(1);
  out[0] = std::max(z, Real(0)) - z * target + std::log1p(std::exp(-std::abs(z)));
  auto bw = [target](detail::TensorNode& o) {
    if (!parent_needs(o, 0)) return;
    const Real z = o.parents[0]->value[0];
    const Real p = z >= 0 ? Real(1) / (Real(1) + std::exp(-z))
                          : std::exp(z) / (Real(1) + std::exp(z));
    parent_grad(o, 0)[0] += o.grad[0] * (p - target);
  };
  return Tensor::make_op("bce_with_logits", {1}, std::move(out), {logit}, bw);
}

}  // namespace avdet
