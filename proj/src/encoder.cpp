// SPDX-License-Identifier: Apache-2.0

#include "avdet/encoder.hpp"

#include <numeric>

namespace avdet {

void FaceBlock::validate() const {
  if (t < 1 || c < 1 || h < 1 || w < 1) {
    throw ShapeError("face block needs positive frame count and dimensions");
  }
  if (pixels.size() != t * c * h * w) {
    throw ShapeError("face block holds " + std::to_string(pixels.size()) + " values, expected " +
                     std::to_string(t * c * h * w));
  }
}

Tensor face_rows(const FaceBlock& block, bool requires_grad) {
  block.validate();
  return Tensor::from_flat({block.t, block.frame_dim()}, block.pixels, requires_grad);
}

EncoderParams EncoderParams::init(Index input_dim, Index dim, Index seq_steps, Index n_layers,
                                  Index n_heads, Rng& rng, bool mlp_enabled) {
  if (n_layers < 0) throw ConfigError("layer count must be non-negative");
  if (n_heads < 1 || dim % n_heads != 0) {
    throw ConfigError("token dim " + std::to_string(dim) + " must divide into " +
                      std::to_string(n_heads) + " heads");
  }
  EncoderParams p;
  p.token_proj = LinearLayer(input_dim, dim, rng);
  p.class_tok = Tensor::uniform({dim}, -1.0 / std::sqrt(static_cast<Real>(dim)),
                                1.0 / std::sqrt(static_cast<Real>(dim)), rng, true);
  p.pos_embed = Tensor::uniform({seq_steps + 1, dim}, -1.0 / std::sqrt(static_cast<Real>(dim)),
                                1.0 / std::sqrt(static_cast<Real>(dim)), rng, true);
  p.n_heads = n_heads;
  p.mlp_enabled = mlp_enabled;
  p.layers.resize(n_layers);
  for (Index l = 0; l < n_layers; ++l) {
    EncoderLayerParams& layer = p.layers[l];
    layer.ln_gamma = Tensor::full({dim}, 1.0, true);
    layer.ln_beta = Tensor::zeros({dim}, true);
    layer.attention = AttentionParams::init(dim, rng);
    if (mlp_enabled) {
      layer.mlp_ln_gamma = Tensor::full({dim}, 1.0, true);
      layer.mlp_ln_beta = Tensor::zeros({dim}, true);
      layer.mlp_in = LinearLayer(dim, 4 * dim, rng);
      layer.mlp_out = LinearLayer(4 * dim, dim, rng);
    }
  }
  return p;
}

void EncoderParams::collect(const std::string& prefix, ParamList& out) const {
  token_proj.collect(prefix + ".token_proj", out);
  out.push_back({prefix + ".class_token", class_tok});
  out.push_back({prefix + ".pos_embed", pos_embed});
  for (size_t l = 0; l < layers.size(); ++l) {
    const std::string lp = prefix + ".layer" + std::to_string(l);
    out.push_back({lp + ".ln.gamma", layers[l].ln_gamma});
    out.push_back({lp + ".ln.beta", layers[l].ln_beta});
    layers[l].attention.collect(lp + ".msa", out);
    if (mlp_enabled) {
      out.push_back({lp + ".mlp_ln.gamma", layers[l].mlp_ln_gamma});
      out.push_back({lp + ".mlp_ln.beta", layers[l].mlp_ln_beta});
      layers[l].mlp_in.collect(lp + ".mlp_in", out);
      layers[l].mlp_out.collect(lp + ".mlp_out", out);
    }
  }
}

TokenSequence tokenize_rows(const Tensor& rows, const EncoderParams& params) {
  if (rows.rank() != 2) throw ShapeError("tokenizer input must be a {steps, features} matrix");
  if (rows.shape()[1] != params.token_proj.in_dim()) {
    throw ShapeError("row width " + std::to_string(rows.shape()[1]) +
                     " does not match the projection input " +
                     std::to_string(params.token_proj.in_dim()));
  }
  if (rows.shape()[0] + 1 != params.seq_len()) {
    throw ShapeError("got " + std::to_string(rows.shape()[0]) +
                     " steps, positional table expects " + std::to_string(params.seq_len() - 1));
  }
  Tensor projected = params.token_proj.apply(rows);
  Tensor cls = reshape(params.class_tok, {1, params.dim()});
  std::vector<Tensor> parts = {cls, projected};
  return TokenSequence{add(concat_rows(parts), params.pos_embed)};
}

TokenSequence tokenize_frame_wise(const FaceBlock& block, const EncoderParams& params) {
  return tokenize_rows(face_rows(block), params);
}

TokenSequence tokenize_patch_wise(const FaceBlock& block, Index patch_size,
                                  const EncoderParams& params, Rng& rng) {
  block.validate();
  if (patch_size < 1 || block.h % patch_size != 0 || block.w % patch_size != 0) {
    throw ConfigError("patch size " + std::to_string(patch_size) + " does not tile " +
                      std::to_string(block.h) + "x" + std::to_string(block.w) + " frames");
  }
  const Index ph = block.h / patch_size;
  const Index pw = block.w / patch_size;
  const Index per_frame = ph * pw;
  const Index total = block.t * per_frame;

  std::vector<Index> deal(total);
  std::iota(deal.begin(), deal.end(), Index{0});
  rng.shuffle(deal);

  // Composite image t receives patches deal[t*per_frame ...] in raster order,
  // preserving each patch's internal layout and channel structure.
  Mat rows = Mat::Zero(block.t, block.frame_dim());
  const auto pixel_at = [&](Index t, Index c, Index y, Index x) {
    return block.pixels[((t * block.c + c) * block.h + y) * block.w + x];
  };
  for (Index t = 0; t < block.t; ++t) {
    for (Index slot = 0; slot < per_frame; ++slot) {
      const Index src = deal[t * per_frame + slot];
      const Index src_t = src / per_frame;
      const Index src_y = (src % per_frame) / pw * patch_size;
      const Index src_x = (src % per_frame) % pw * patch_size;
      const Index dst_y = slot / pw * patch_size;
      const Index dst_x = slot % pw * patch_size;
      for (Index c = 0; c < block.c; ++c) {
        for (Index dy = 0; dy < patch_size; ++dy) {
          for (Index dx = 0; dx < patch_size; ++dx) {
            rows(t, (c * block.h + dst_y + dy) * block.w + dst_x + dx) =
                pixel_at(src_t, c, src_y + dy, src_x + dx);
          }
        }
      }
    }
  }
  return tokenize_rows(Tensor::from_matrix(rows), params);
}

TokenSequence encode(const TokenSequence& seq, const EncoderParams& params) {
  if (!seq.tokens.defined() || seq.tokens.rank() != 2) {
    throw ShapeError("encoder input must be a token matrix");
  }
  Tensor x = seq.tokens;
  for (const EncoderLayerParams& layer : params.layers) {
    Tensor normed = layer_norm(x, layer.ln_gamma, layer.ln_beta, params.ln_eps);
    x = add(multi_head_self_attention(normed, layer.attention, params.n_heads), x);
    if (params.mlp_enabled) {
      Tensor ff = layer_norm(x, layer.mlp_ln_gamma, layer.mlp_ln_beta, params.ln_eps);
      x = add(layer.mlp_out.apply(gelu(layer.mlp_in.apply(ff))), x);
    }
  }
  return TokenSequence{x};
}

Tensor class_token(const TokenSequence& seq) {
  return reshape(slice_rows(seq.tokens, 0, 1), {seq.tokens.shape()[1]});
}

}  // namespace avdet
