// SPDX-License-Identifier: Apache-2.0
//
// Modality encoders: whole-frame and patch-composite tokenizers for video,
// row tokenization shared with the audio path, and an L-layer pre-norm
// attention encoder. Both modalities run the same encode(); they differ only
// in how rows are produced and in their parameters.

#pragma once

#include <vector>

#include "avdet/nn.hpp"

namespace avdet {

struct FaceBlock {
  Index t = 0, c = 0, h = 0, w = 0;
  Vec pixels;  // flat (t, c, h, w) row-major, values in [0, 1]

  Index frame_dim() const { return c * h * w; }
  void validate() const;
};

/// The block's frames as a {T, C*H*W} tensor, one row per frame.
Tensor face_rows(const FaceBlock& block, bool requires_grad = false);

/// Sequence of T+1 embedded tokens; row 0 is the class token.
struct TokenSequence {
  Tensor tokens;  // {T+1, D}
};

struct EncoderLayerParams {
  Tensor ln_gamma;  // {D}
  Tensor ln_beta;   // {D}
  AttentionParams attention;
  // Present only when the feed-forward sublayer is enabled.
  Tensor mlp_ln_gamma;
  Tensor mlp_ln_beta;
  LinearLayer mlp_in;
  LinearLayer mlp_out;
};

struct EncoderParams {
  LinearLayer token_proj;  // input_dim -> D
  Tensor class_tok;        // {D}
  Tensor pos_embed;        // {T+1, D}
  std::vector<EncoderLayerParams> layers;
  Index n_heads = 1;
  bool mlp_enabled = false;  // attention + residual only by default
  Real ln_eps = 1e-5;

  Index dim() const { return token_proj.out_dim(); }
  Index seq_len() const { return pos_embed.shape()[0]; }

  static EncoderParams init(Index input_dim, Index dim, Index seq_steps, Index n_layers,
                            Index n_heads, Rng& rng, bool mlp_enabled = false);
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Projects each row to a token, prepends the class token, and adds the
/// positional embeddings. rows: {T, input_dim} with T+1 == params.seq_len().
TokenSequence tokenize_rows(const Tensor& rows, const EncoderParams& params);

/// One token per whole frame.
TokenSequence tokenize_frame_wise(const FaceBlock& block, const EncoderParams& params);

/// Ablation baseline: every patch of every frame is dealt exactly once into
/// T composite images (a seeded permutation, raster-placed), which are then
/// projected like whole frames. Keeps the frame-wise token budget.
TokenSequence tokenize_patch_wise(const FaceBlock& block, Index patch_size,
                                  const EncoderParams& params, Rng& rng);

/// L rounds of x <- MSA(LN(x)) + x (plus an optional pre-norm feed-forward
/// sublayer when enabled). Shape-preserving for any L, including L=0.
TokenSequence encode(const TokenSequence& seq, const EncoderParams& params);

/// Row 0 as a {D} vector.
Tensor class_token(const TokenSequence& seq);

}  // namespace avdet
