// SPDX-License-Identifier: Apache-2.0

#include "avdet/model.hpp"

#include <cmath>

namespace avdet {

const char* to_string(TokenizerMode m) {
  return m == TokenizerMode::frame ? "frame" : "patch";
}

const char* to_string(FusionMode m) {
  switch (m) {
    case FusionMode::visual_only: return "visual_only";
    case FusionMode::av_concat: return "av_concat";
    default: return "av_dwf";
  }
}

const char* to_string(WeightMode m) {
  return m == WeightMode::literal ? "literal" : "received";
}

TokenizerMode tokenizer_mode_from(const std::string& s) {
  if (s == "frame") return TokenizerMode::frame;
  if (s == "patch") return TokenizerMode::patch;
  throw ConfigError("unknown tokenizer mode '" + s + "'");
}

FusionMode fusion_mode_from(const std::string& s) {
  if (s == "visual_only") return FusionMode::visual_only;
  if (s == "av_concat") return FusionMode::av_concat;
  if (s == "av_dwf") return FusionMode::av_dwf;
  throw ConfigError("unknown fusion mode '" + s + "'");
}

WeightMode weight_mode_from(const std::string& s) {
  if (s == "literal") return WeightMode::literal;
  if (s == "received") return WeightMode::received;
  throw ConfigError("unknown weight mode '" + s + "'");
}

Index ModelConfig::audio_token_dim() const {
  return align == AlignMode::mean_pool ? mfcc.n_coeffs : mfcc.n_coeffs * frames_per_step;
}

Index ModelConfig::min_audio_samples() const {
  const Index rows = frames * frames_per_step;
  return (rows - 1) * mfcc.frame_shift() + mfcc.frame_len();
}

Index ModelConfig::fused_dim() const {
  return fusion == FusionMode::visual_only ? dim : 2 * dim;
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper() {
  ModelConfig cfg;
  cfg.frames = 30;
  cfg.channels = 3;
  cfg.height = 224;
  cfg.width = 224;
  cfg.dim = 512;
  cfg.layers = 6;
  cfg.heads = 8;
  cfg.fusion_heads = 8;
  cfg.patch_size = 16;
  return cfg;
}

void ModelConfig::validate() const {
  if (frames < 1) throw ConfigError("model: frames must be >= 1");
  if (channels < 1 || height < 1 || width < 1) throw ConfigError("model: bad frame geometry");
  if (dim < 1 || layers < 1) throw ConfigError("model: dim and layers must be >= 1");
  if (heads < 1 || dim % heads != 0) {
    throw ConfigError("model: dim " + std::to_string(dim) + " not divisible by " +
                      std::to_string(heads) + " encoder heads");
  }
  if (fusion == FusionMode::av_dwf && (fusion_heads < 1 || dim % fusion_heads != 0)) {
    throw ConfigError("model: dim " + std::to_string(dim) + " not divisible by " +
                      std::to_string(fusion_heads) + " fusion heads");
  }
  if (tokenizer == TokenizerMode::patch) {
    if (patch_size < 1 || height % patch_size != 0 || width % patch_size != 0) {
      throw ConfigError("model: patch size " + std::to_string(patch_size) +
                        " must divide " + std::to_string(height) + "x" + std::to_string(width));
    }
  }
  if (frames_per_step < 1) throw ConfigError("model: frames_per_step must be >= 1");
  if (ln_eps <= 0) throw ConfigError("model: ln_eps must be positive");
  if (!(audio_gain > 0) || !std::isfinite(audio_gain)) {
    throw ConfigError("model: audio_gain must be finite and positive");
  }
  if (!(video_gain > 0) || !std::isfinite(video_gain)) {
    throw ConfigError("model: video_gain must be finite and positive");
  }
  mfcc.validate();
}

Detector Detector::init(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  Detector d;
  d.cfg = cfg;
  d.mfcc_basis = MfccBasis::build(cfg.mfcc);
  d.face = EncoderParams::init(cfg.frame_dim(), cfg.dim, cfg.frames, cfg.layers, cfg.heads, rng,
                               cfg.mlp);
  d.face.ln_eps = cfg.ln_eps;
  if (cfg.uses_audio()) {
    d.audio = EncoderParams::init(cfg.audio_token_dim(), cfg.dim, cfg.frames, cfg.layers,
                                  cfg.heads, rng, cfg.mlp);
    d.audio->ln_eps = cfg.ln_eps;
  }
  if (cfg.fusion == FusionMode::av_dwf) {
    d.dwf = DwfParams::init(cfg.dim, cfg.fusion_heads, rng, cfg.weight_mode);
    d.dwf->ln_eps = cfg.ln_eps;
  }
  d.head = ClassifierHead::init(cfg.fused_dim(), rng);
  return d;
}

ParamList Detector::parameters() const {
  ParamList out;
  face.collect("face", out);
  if (audio) audio->collect("audio", out);
  if (dwf) dwf->collect("dwf", out);
  head.collect("head", out);
  return out;
}

ModelInput Detector::prepare(const FaceBlock& block, const AudioClip& clip) const {
  block.validate();
  if (block.t != cfg.frames || block.c != cfg.channels || block.h != cfg.height ||
      block.w != cfg.width) {
    throw ShapeError("prepare: block " + std::to_string(block.t) + "x" +
                     std::to_string(block.c) + "x" + std::to_string(block.h) + "x" +
                     std::to_string(block.w) + " does not match the configured geometry");
  }
  ModelInput input;
  input.block = block;
  {
    // Subtract the mean frame from every frame so both tokenizer paths see
    // the same centered pixels.
    const Index fd = block.frame_dim();
    Vec mean_frame = Vec::Zero(fd);
    for (Index t = 0; t < block.t; ++t) mean_frame += block.pixels.segment(t * fd, fd);
    mean_frame /= static_cast<Real>(block.t);
    for (Index t = 0; t < block.t; ++t) {
      input.block.pixels.segment(t * fd, fd) =
          (block.pixels.segment(t * fd, fd) - mean_frame) * cfg.video_gain;
    }
    NoGradGuard guard;
    input.face_rows = face_rows(input.block);
  }
  if (cfg.uses_audio()) {
    if (clip.sample_rate != cfg.mfcc.sample_rate) {
      throw ConfigError("prepare: clip sample rate " + std::to_string(clip.sample_rate) +
                        " != configured " + std::to_string(cfg.mfcc.sample_rate));
    }
    NoGradGuard guard;
    Tensor samples = Tensor::from_flat({clip.samples.size()}, clip.samples);
    Tensor rows = mfcc_graph(samples, cfg.mfcc, mfcc_basis);
    Tensor aligned = align_audio_block(rows, cfg.frames, cfg.frames_per_step, cfg.align);
    input.audio_rows = center_scale_rows(aligned, cfg.audio_gain);
  }
  return input;
}

namespace {

Tensor concat_pair(const Tensor& f, const Tensor& a, Index dim) {
  const Tensor parts[] = {reshape(f, {1, dim}), reshape(a, {1, dim})};
  return reshape(concat_cols(parts), {2 * dim});
}

}  // namespace

// Fusion switch shared by every forward path; audio_rows must be defined
// whenever the fusion mode consumes audio.
DetectorOutput Detector::fuse_and_classify(const Tensor& f_summary,
                                           const Tensor& audio_rows) const {
  DetectorOutput out;
  Tensor fused;
  if (cfg.fusion == FusionMode::visual_only) {
    fused = f_summary;
  } else {
    const Tensor a_summary = class_token(encode(tokenize_rows(audio_rows, *audio), *audio));
    if (cfg.fusion == FusionMode::av_concat) {
      fused = concat_pair(f_summary, a_summary, cfg.dim);
    } else {
      DwfResult r = dwf_forward(f_summary, a_summary, *dwf);
      fused = r.fused;
      out.fusion_log = std::move(r.logged);
    }
  }
  out.logit = classify_logit(fused, head);
  out.prob = sigmoid(out.logit);
  return out;
}

DetectorOutput Detector::forward(const ModelInput& input, Rng& patch_rng) const {
  TokenSequence face_seq = cfg.tokenizer == TokenizerMode::frame
                               ? tokenize_rows(input.face_rows, face)
                               : tokenize_patch_wise(input.block, cfg.patch_size, face, patch_rng);
  return fuse_and_classify(class_token(encode(face_seq, face)), input.audio_rows);
}

DetectorOutput Detector::forward_raw(const FaceBlock& block, const AudioClip& clip,
                                     Rng& patch_rng) const {
  return forward(prepare(block, clip), patch_rng);
}

DetectorOutput Detector::forward_graph(const Tensor& face_pixel_rows, const Tensor& samples,
                                       Rng& patch_rng) const {
  (void)patch_rng;
  if (cfg.tokenizer != TokenizerMode::frame) {
    throw ConfigError("forward_graph: patch composites are assembled outside the graph; "
                      "use the frame tokenizer for input gradients");
  }
  const Tensor f_summary = class_token(
      encode(tokenize_rows(center_scale_rows(face_pixel_rows, cfg.video_gain), face), face));
  Tensor aligned;
  if (cfg.uses_audio()) {
    Tensor rows = mfcc_graph(samples, cfg.mfcc, mfcc_basis);
    aligned = center_scale_rows(
        align_audio_block(rows, cfg.frames, cfg.frames_per_step, cfg.align), cfg.audio_gain);
  }
  return fuse_and_classify(f_summary, aligned);
}

}  // namespace avdet
