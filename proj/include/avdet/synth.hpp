// SPDX-License-Identifier: Apache-2.0
//
// Synthetic audio-video pairs with a controllable cross-modal coupling. A
// sinusoidal modulator with one cycle per clip drives both streams: the
// audio tone's instantaneous frequency and envelope follow it, and the
// vertical grating's signed contrast follows it frame by frame. The
// modulator phase is drawn from a small set of evenly spaced classes shared
// by both streams; mild i.i.d. noise keeps every rendered sample unique.
// Forgeries break exactly one thing: the grating orientation (video_only),
// the audio modulator phase (audio_only), or the video phase (desync).
// Phase breaks jump at least min_phase_gap classes, so the broken coupling
// is far from the genuine one. Detecting audio_only and desync requires
// BOTH streams: each stream alone stays distributionally identical to the
// real ones.

#pragma once

#include <cstdint>
#include <vector>

#include "avdet/model.hpp"

namespace avdet {

enum class ForgeryType { none, video_only, audio_only, desync };

const char* to_string(ForgeryType t);
ForgeryType forgery_type_from(const std::string& s);

struct SyntheticSample {
  FaceBlock face;
  AudioClip audio;
  int label = 0;  // 1 = fake
  ForgeryType forgery = ForgeryType::none;
};

/// Proportions of each forgery type within the fake half. Must sum to one.
struct ForgeryMix {
  Real video_only = 1.0 / 3.0;
  Real audio_only = 1.0 / 3.0;
  Real desync = 1.0 / 3.0;

  void validate() const;
};

struct SynthConfig {
  Index frames = 8;
  Index channels = 1;
  Index height = 16;
  Index width = 16;
  Index sample_rate = 16000;
  Index samples_per_clip = 5296;
  Real step_seconds = 0.04;  // one video step; frame timestamps sit at step centers

  Real carrier_hz = 440.0;  // tone base frequency
  Real freq_dev = 120.0;    // FM depth, Hz
  Real am_depth = 0.6;      // envelope swing around the mean level
  Real amplitude = 0.5;
  Real contrast = 0.35;      // grating amplitude around mid gray
  Index spatial_cycles = 2;  // grating cycles across the frame

  // Modulator phases live on an even grid of n_phases classes; forged
  // streams land at least min_phase_gap classes away (circularly), keeping
  // broken couplings well separated from the genuine diagonal. The defaults
  // put fakes in exact antiphase.
  Index n_phases = 4;
  Index min_phase_gap = 2;

  // Per-pixel and per-sample additive noise, i.i.d. standard normal scaled
  // by these; small enough to leave the couplings readable.
  Real video_noise = 0.02;
  Real audio_noise = 0.005;

  /// Geometry and clip length matched to a model config: exactly enough
  /// samples for frames*frames_per_step MFCC rows.
  static SynthConfig for_model(const ModelConfig& model);

  Real clip_seconds() const { return static_cast<Real>(frames) * step_seconds; }
  void validate() const;
};

/// Deterministic per seed; sample i depends only on (seed, i), so ordering
/// and machine parallelism cannot change the data. Real and fake halves are
/// balanced by construction (fakes get floor(n/2)); the fake half follows
/// the mix via largest-remainder rounding. Throws ConfigError on n < 2 or an
/// invalid mix.
std::vector<SyntheticSample> generate_dataset(Index n, std::uint64_t seed, const ForgeryMix& mix,
                                              const SynthConfig& cfg);

/// Reads both modulator trajectories back from the raw sample alone: the
/// grating's signed contrast per frame via spatial projection, the tone's
/// frequency per step via a lag-two autocorrelation estimate, then their
/// Pearson correlation. Near 1 for genuine coupling, near cos(phase gap) for
/// phase breaks, and 0 when no vertical grating is present.
Real coupling_statistic(const SyntheticSample& sample, const SynthConfig& cfg);

}  // namespace avdet
