// SPDX-License-Identifier: Apache-2.0
//
// The full detector: a face encoder over frame (or patch-composite) tokens,
// an audio encoder over aligned MFCC tokens, an optional dynamic-weight
// fusion stage, and a linear classifier head. One config struct carries
// every hyperparameter so presets and checkpoints stay self-describing.

#pragma once

#include <optional>

#include "avdet/audio.hpp"
#include "avdet/encoder.hpp"
#include "avdet/fusion.hpp"

namespace avdet {

enum class TokenizerMode { frame, patch };
enum class FusionMode { visual_only, av_concat, av_dwf };

const char* to_string(TokenizerMode m);
const char* to_string(FusionMode m);
const char* to_string(WeightMode m);
TokenizerMode tokenizer_mode_from(const std::string& s);
FusionMode fusion_mode_from(const std::string& s);
WeightMode weight_mode_from(const std::string& s);

struct ModelConfig {
  // Video block geometry.
  Index frames = 8;  // steps per block
  Index channels = 1;
  Index height = 16;
  Index width = 16;

  // Shared encoder geometry.
  Index dim = 32;    // token width
  Index layers = 2;  // encoder depth
  Index heads = 4;
  bool mlp = false;  // optional feed-forward sublayer in the encoders
  Real ln_eps = 1e-5;

  TokenizerMode tokenizer = TokenizerMode::frame;
  Index patch_size = 8;  // patch tokenizer only

  FusionMode fusion = FusionMode::av_dwf;
  WeightMode weight_mode = WeightMode::received;
  Index fusion_heads = 4;

  // Input conditioning. Both token streams are mean-centered per clip (the
  // mean frame, respectively the mean cepstral vector, is subtracted) and
  // scaled by a fixed gain, so the encoders attend over zero-mean
  // trajectories instead of large static offsets. frames_per_step MFCC rows
  // correspond to one video step.
  MfccConfig mfcc{};
  Index frames_per_step = 10;
  AlignMode align = AlignMode::mean_pool;
  Real audio_gain = 0.25;
  Real video_gain = 1.0;

  Index frame_dim() const { return channels * height * width; }
  Index audio_token_dim() const;
  /// Shortest waveform that yields enough MFCC rows for one block.
  Index min_audio_samples() const;
  /// Width of the vector entering the classifier head.
  Index fused_dim() const;

  bool uses_audio() const { return fusion != FusionMode::visual_only; }

  static ModelConfig desk();
  static ModelConfig paper();

  void validate() const;
};

/// One sample's constant inputs, precomputed once so repeated forwards skip
/// the DSP. Both streams arrive centered and gain-scaled; the pixel block is
/// kept (also centered) because the patch tokenizer re-deals composites per
/// forward. audio_rows stays undefined for visual-only runs.
struct ModelInput {
  FaceBlock block;
  Tensor face_rows;   // {T, C*H*W}
  Tensor audio_rows;  // {T, audio_token_dim}
};

struct DetectorOutput {
  Tensor prob;   // {1}, P(fake)
  Tensor logit;  // {1}, pre-sigmoid score
  std::optional<FusionWeights> fusion_log;
};

struct Detector {
  ModelConfig cfg;
  MfccBasis mfcc_basis;  // constant DSP tables, not parameters
  EncoderParams face;
  std::optional<EncoderParams> audio;
  std::optional<DwfParams> dwf;
  ClassifierHead head;

  static Detector init(const ModelConfig& cfg, Rng& rng);

  /// Every trainable tensor, prefixed "face." / "audio." / "dwf." / "head.".
  ParamList parameters() const;

  /// Validates the raw sample against the config and precomputes constant
  /// input tensors (audio only when the fusion mode consumes it).
  ModelInput prepare(const FaceBlock& block, const AudioClip& clip) const;

  /// Forward from prepared inputs. patch_rng drives composite dealing and is
  /// consumed only in patch tokenizer mode.
  DetectorOutput forward(const ModelInput& input, Rng& patch_rng) const;

  /// Forward from raw inputs as constant leaves.
  DetectorOutput forward_raw(const FaceBlock& block, const AudioClip& clip, Rng& patch_rng) const;

  /// Fully differentiable path from a {T, C*H*W} pixel tensor and a rank-1
  /// waveform tensor. Frame tokenizer only (patch composites are assembled
  /// outside the graph).
  DetectorOutput forward_graph(const Tensor& face_pixel_rows, const Tensor& samples,
                               Rng& patch_rng) const;

 private:
  DetectorOutput fuse_and_classify(const Tensor& f_summary, const Tensor& audio_rows) const;
};

}  // namespace avdet
