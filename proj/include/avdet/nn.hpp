// SPDX-License-Identifier: Apache-2.0
//
// Parameterized building blocks above the raw tensor ops: linear layers,
// named parameter collection for the optimizer/checkpointer, and multi-head
// self-attention.

#pragma once

#include <string>
#include <vector>

#include "avdet/ops.hpp"
#include "avdet/tensor.hpp"

namespace avdet {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

using ParamList = std::vector<NamedParam>;

class LinearLayer {
 public:
  LinearLayer() = default;

  /// Weights uniform in (-1/sqrt(in_dim), +1/sqrt(in_dim)), bias zero.
  LinearLayer(Index in_dim, Index out_dim, Rng& rng);

  /// x of shape {in} -> {out}, or {R, in} -> {R, out}; bias added per row.
  Tensor apply(const Tensor& x) const;

  Index in_dim() const { return weight.shape()[0]; }
  Index out_dim() const { return weight.shape()[1]; }

  void collect(const std::string& prefix, ParamList& out) const;

  Tensor weight;  // {in, out}
  Tensor bias;    // {out}
};

/// Packed projections for one attention block: query/key/value map D to D
/// (head h owns columns [h*d_h, (h+1)*d_h)), output projects the concatenated
/// heads back to D.
struct AttentionParams {
  LinearLayer query;
  LinearLayer key;
  LinearLayer value;
  LinearLayer output;

  static AttentionParams init(Index dim, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Scaled dot-product self-attention over a {T, D} sequence: per head,
/// softmax(Q K^T / sqrt(d_h)) V with d_h = D / n_heads; heads concatenated
/// and projected by the output layer. Output shape equals input shape.
/// Throws ConfigError unless D divides evenly into n_heads.
Tensor multi_head_self_attention(const Tensor& x, const AttentionParams& params, Index n_heads);

}  // namespace avdet
