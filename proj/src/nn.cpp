// SPDX-License-Identifier: Apache-2.0

#include "avdet/nn.hpp"

#include <cmath>

namespace avdet {

LinearLayer::LinearLayer(Index in_dim, Index out_dim, Rng& rng) {
  if (in_dim <= 0 || out_dim <= 0) throw ConfigError("linear layer dimensions must be positive");
  const Real bound = Real(1) / std::sqrt(static_cast<Real>(in_dim));
  weight = Tensor::uniform({in_dim, out_dim}, -bound, bound, rng, /*requires_grad=*/true);
  bias = Tensor::zeros({out_dim}, /*requires_grad=*/true);
}

Tensor LinearLayer::apply(const Tensor& x) const {
  if (x.rank() == 1) return add(matmul(x, weight), bias);
  if (x.rank() == 2) return add_row(matmul(x, weight), bias);
  throw ShapeError("linear layer input must be rank 1 or 2, got " + shape_str(x.shape()));
}

void LinearLayer::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

AttentionParams AttentionParams::init(Index dim, Rng& rng) {
  AttentionParams p;
  p.query = LinearLayer(dim, dim, rng);
  p.key = LinearLayer(dim, dim, rng);
  p.value = LinearLayer(dim, dim, rng);
  p.output = LinearLayer(dim, dim, rng);
  return p;
}

void AttentionParams::collect(const std::string& prefix, ParamList& out) const {
  query.collect(prefix + ".q", out);
  key.collect(prefix + ".k", out);
  value.collect(prefix + ".v", out);
  output.collect(prefix + ".o", out);
}

Tensor multi_head_self_attention(const Tensor& x, const AttentionParams& params, Index n_heads) {
  if (x.rank() != 2) throw ShapeError("attention input must be a {tokens, dim} matrix");
  const Index dim = x.shape()[1];
  if (n_heads <= 0 || dim % n_heads != 0) {
    throw ConfigError("embedding dim " + std::to_string(dim) + " is not divisible into " +
                      std::to_string(n_heads) + " heads");
  }
  const Index d_h = dim / n_heads;
  const Real att_scale = Real(1) / std::sqrt(static_cast<Real>(d_h));

  const Tensor q = params.query.apply(x);
  const Tensor k = params.key.apply(x);
  const Tensor v = params.value.apply(x);

  std::vector<Tensor> heads;
  heads.reserve(n_heads);
  for (Index h = 0; h < n_heads; ++h) {
    const Tensor qh = slice_cols(q, h * d_h, d_h);
    const Tensor kh = slice_cols(k, h * d_h, d_h);
    const Tensor vh = slice_cols(v, h * d_h, d_h);
    const Tensor attn = softmax(scale(matmul(qh, transpose(kh)), att_scale));
    heads.push_back(matmul(attn, vh));
  }
  return params.output.apply(concat_cols(heads));
}

}  // namespace avdet
