// SPDX-License-Identifier: Apache-2.0
//
// Dynamic-weight fusion of the two modality summary vectors. Each of the two
// stacked cross-attention layers projects both vectors through one shared
// set of query/key/value maps, derives per-head scalar modality weights from
// the cross attention masses, scales each modality's per-head value by its
// weight, projects the concatenation, and applies a shared residual layer
// norm. The second layer's aggregated weights scale the ORIGINAL summary
// vectors, whose concatenation feeds the classifier head.

#pragma once

#include "avdet/nn.hpp"

namespace avdet {

/// Two readings of the per-head weight aggregation. "literal" sums the
/// attention a modality pays (a full two-way softmax row, hence identically
/// one: fusion degenerates to plain concatenation). "received" sums the
/// attention a modality receives from both queries, which actually moves.
enum class WeightMode { literal, received };

struct HeadWeights {
  Real beta_ff = 0, beta_fa = 0, beta_af = 0, beta_aa = 0;
  Real w_f = 0, w_a = 0;
};

struct LayerWeights {
  std::vector<HeadWeights> heads;
  Real w_f = 0, w_a = 0;  // head averages
};

struct FusionWeights {
  std::vector<LayerWeights> layers;  // front = first fusion layer
};

struct MhcaLayerParams {
  LinearLayer query;   // shared by both modalities
  LinearLayer key;
  LinearLayer value;
  LinearLayer output;
  Tensor ln_gamma;  // one affine pair serves both residual norms
  Tensor ln_beta;
};

struct DwfParams {
  std::vector<MhcaLayerParams> layers;  // exactly two
  Index n_heads = 1;
  Real ln_eps = 1e-5;
  WeightMode mode = WeightMode::received;

  Index dim() const { return layers.front().query.in_dim(); }

  static DwfParams init(Index dim, Index n_heads, Rng& rng,
                        WeightMode mode = WeightMode::received);
  void collect(const std::string& prefix, ParamList& out) const;
};

struct MhcaResult {
  Tensor h_v;        // {D}
  Tensor h_a;        // {D}
  Tensor w_f;        // {1, 1}, head-averaged, differentiable
  Tensor w_a;        // {1, 1}
  LayerWeights logged;
};

/// One fusion layer over a pair of {D} vectors. Throws ConfigError unless
/// D divides into n_heads.
MhcaResult mhca_layer(const Tensor& f, const Tensor& a, const MhcaLayerParams& params,
                      Index n_heads, Real ln_eps, WeightMode mode);

struct DwfResult {
  Tensor fused;  // {2D}: [W_F * f_summary, W_A * a_summary]
  Tensor w_f;    // final-layer aggregated weights
  Tensor w_a;
  FusionWeights logged;
};

DwfResult dwf_forward(const Tensor& f_summary, const Tensor& a_summary, const DwfParams& params);

struct ClassifierHead {
  LinearLayer lin;  // in_dim -> 1

  static ClassifierHead init(Index in_dim, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Raw score of the positive ("fake") class, shape {1}.
Tensor classify_logit(const Tensor& v, const ClassifierHead& head);

/// P(fake) in (0, 1), shape {1}.
Tensor classify(const Tensor& v, const ClassifierHead& head);

}  // namespace avdet
