// SPDX-License-Identifier: Apache-2.0

#include "avdet/fusion.hpp"

#include <cmath>

namespace avdet {

DwfParams DwfParams::init(Index dim, Index n_heads, Rng& rng, WeightMode mode) {
  if (n_heads < 1 || dim % n_heads != 0) {
    throw ConfigError("fusion dim " + std::to_string(dim) + " must divide into " +
                      std::to_string(n_heads) + " heads");
  }
  DwfParams p;
  p.n_heads = n_heads;
  p.mode = mode;
  p.layers.resize(2);
  for (MhcaLayerParams& layer : p.layers) {
    layer.query = LinearLayer(dim, dim, rng);
    layer.key = LinearLayer(dim, dim, rng);
    layer.value = LinearLayer(dim, dim, rng);
    layer.output = LinearLayer(dim, dim, rng);
    layer.ln_gamma = Tensor::full({dim}, 1.0, true);
    layer.ln_beta = Tensor::zeros({dim}, true);
  }
  return p;
}

void DwfParams::collect(const std::string& prefix, ParamList& out) const {
  for (size_t l = 0; l < layers.size(); ++l) {
    const std::string lp = prefix + ".layer" + std::to_string(l);
    layers[l].query.collect(lp + ".q", out);
    layers[l].key.collect(lp + ".k", out);
    layers[l].value.collect(lp + ".v", out);
    layers[l].output.collect(lp + ".o", out);
    out.push_back({lp + ".ln.gamma", layers[l].ln_gamma});
    out.push_back({lp + ".ln.beta", layers[l].ln_beta});
  }
}

namespace {

/// Attention mass between a query and two keys, softmax over the key pair.
/// Computed as sigmoid of the scaled score difference: exactly the two-way
/// softmax, and the complementary pair (p, 1-p) sums to 1.0 without rounding
/// residue, which keeps the literal weight identity exact.
struct BetaPair {
  Tensor to_first;   // {1, 1}
  Tensor to_second;  // {1, 1}
};

BetaPair two_key_attention(const Tensor& q, const Tensor& k_first, const Tensor& k_second,
                           Real inv_sqrt_dh) {
  Tensor s_first = matmul(q, transpose(k_first));    // {1, 1}
  Tensor s_second = matmul(q, transpose(k_second));  // {1, 1}
  Tensor p = sigmoid(scale(sub(s_first, s_second), inv_sqrt_dh));
  return {p, sub(Tensor::full({1, 1}, 1.0), p)};
}

}  // namespace

MhcaResult mhca_layer(const Tensor& f, const Tensor& a, const MhcaLayerParams& params,
                      Index n_heads, Real ln_eps, WeightMode mode) {
  if (f.rank() != 1 || a.rank() != 1 || f.shape() != a.shape()) {
    throw ShapeError("fusion expects two equal-length vectors, got " + shape_str(f.shape()) +
                     " and " + shape_str(a.shape()));
  }
  const Index dim = f.shape()[0];
  if (n_heads < 1 || dim % n_heads != 0) {
    throw ConfigError("fusion dim " + std::to_string(dim) + " must divide into " +
                      std::to_string(n_heads) + " heads");
  }
  const Index d_h = dim / n_heads;
  const Real inv_sqrt_dh = Real(1) / std::sqrt(static_cast<Real>(d_h));

  const Tensor f_row = reshape(f, {1, dim});
  const Tensor a_row = reshape(a, {1, dim});
  const Tensor q_f = params.query.apply(f_row);
  const Tensor q_a = params.query.apply(a_row);
  const Tensor k_f = params.key.apply(f_row);
  const Tensor k_a = params.key.apply(a_row);
  const Tensor v_f = params.value.apply(f_row);
  const Tensor v_a = params.value.apply(a_row);

  MhcaResult result;
  result.logged.heads.resize(n_heads);

  std::vector<Tensor> f_heads, a_heads;
  f_heads.reserve(n_heads);
  a_heads.reserve(n_heads);
  Tensor w_f_sum, w_a_sum;
  for (Index h = 0; h < n_heads; ++h) {
    const Tensor qf = slice_cols(q_f, h * d_h, d_h);
    const Tensor qa = slice_cols(q_a, h * d_h, d_h);
    const Tensor kf = slice_cols(k_f, h * d_h, d_h);
    const Tensor ka = slice_cols(k_a, h * d_h, d_h);
    const Tensor vf = slice_cols(v_f, h * d_h, d_h);
    const Tensor va = slice_cols(v_a, h * d_h, d_h);

    // Query f over keys (f, a); query a over keys (a, f).
    const BetaPair from_f = two_key_attention(qf, kf, ka, inv_sqrt_dh);
    const BetaPair from_a = two_key_attention(qa, ka, kf, inv_sqrt_dh);
    const Tensor& beta_ff = from_f.to_first;
    const Tensor& beta_fa = from_f.to_second;
    const Tensor& beta_aa = from_a.to_first;
    const Tensor& beta_af = from_a.to_second;

    // literal: the mass each modality pays out (sums its own softmax row);
    // received: the mass each modality draws from both queries.
    const Tensor w_f_h = mode == WeightMode::literal ? add(beta_ff, beta_fa)
                                                     : add(beta_ff, beta_af);
    const Tensor w_a_h = mode == WeightMode::literal ? add(beta_aa, beta_af)
                                                     : add(beta_aa, beta_fa);

    f_heads.push_back(scalar_mul(w_f_h, vf));
    a_heads.push_back(scalar_mul(w_a_h, va));
    w_f_sum = h == 0 ? w_f_h : add(w_f_sum, w_f_h);
    w_a_sum = h == 0 ? w_a_h : add(w_a_sum, w_a_h);

    HeadWeights& hw = result.logged.heads[h];
    hw.beta_ff = beta_ff.item();
    hw.beta_fa = beta_fa.item();
    hw.beta_af = beta_af.item();
    hw.beta_aa = beta_aa.item();
    hw.w_f = w_f_h.item();
    hw.w_a = w_a_h.item();
  }

  result.w_f = div_by(w_f_sum, static_cast<Real>(n_heads));
  result.w_a = div_by(w_a_sum, static_cast<Real>(n_heads));
  result.logged.w_f = result.w_f.item();
  result.logged.w_a = result.w_a.item();

  const Tensor mhca_f = params.output.apply(concat_cols(f_heads));
  const Tensor mhca_a = params.output.apply(concat_cols(a_heads));
  result.h_v = reshape(
      layer_norm(add(mhca_f, f_row), params.ln_gamma, params.ln_beta, ln_eps), {dim});
  result.h_a = reshape(
      layer_norm(add(mhca_a, a_row), params.ln_gamma, params.ln_beta, ln_eps), {dim});
  return result;
}

DwfResult dwf_forward(const Tensor& f_summary, const Tensor& a_summary, const DwfParams& params) {
  if (params.layers.size() != 2) throw ConfigError("fusion expects exactly two layers");
  const MhcaResult first = mhca_layer(f_summary, a_summary, params.layers[0], params.n_heads,
                                      params.ln_eps, params.mode);
  const MhcaResult second = mhca_layer(first.h_v, first.h_a, params.layers[1], params.n_heads,
                                       params.ln_eps, params.mode);

  DwfResult result;
  result.w_f = second.w_f;
  result.w_a = second.w_a;
  result.logged.layers = {first.logged, second.logged};

  // Final weights scale the ORIGINAL summary vectors, not the layer outputs.
  const Index dim = f_summary.shape()[0];
  const Tensor weighted_f = reshape(scalar_mul(second.w_f, f_summary), {1, dim});
  const Tensor weighted_a = reshape(scalar_mul(second.w_a, a_summary), {1, dim});
  std::vector<Tensor> halves = {weighted_f, weighted_a};
  result.fused = reshape(concat_cols(halves), {2 * dim});
  return result;
}

ClassifierHead ClassifierHead::init(Index in_dim, Rng& rng) {
  ClassifierHead head;
  head.lin = LinearLayer(in_dim, 1, rng);
  return head;
}

void ClassifierHead::collect(const std::string& prefix, ParamList& out) const {
  lin.collect(prefix, out);
}

Tensor classify_logit(const Tensor& v, const ClassifierHead& head) {
  if (v.rank() != 1 || v.shape()[0] != head.lin.in_dim()) {
    throw ShapeError("classifier expects a vector of length " +
                     std::to_string(head.lin.in_dim()) + ", got " + shape_str(v.shape()));
  }
  return head.lin.apply(v);
}

Tensor classify(const Tensor& v, const ClassifierHead& head) {
  return sigmoid(classify_logit(v, head));
}

}  // namespace avdet
