// SPDX-License-Identifier: Apache-2.0
//
// Waveform to MFCC front end. The whole pipeline is expressed as fixed linear
// bases (DFT, mel filterbank, DCT) around the differentiable tensor ops, so
// the same code path serves plain feature extraction and end-to-end gradient
// flow into the waveform.

#pragma once

#include "avdet/ops.hpp"
#include "avdet/tensor.hpp"

namespace avdet {

struct AudioClip {
  Vec samples;        // mono, in [-1, 1]
  Index sample_rate;  // Hz
};

/// Periodic Hann window: w[n] = 0.5 (1 - cos(2 pi n / len)), so w[0] = 0 and
/// the implicit period is len (not len - 1).
Vec periodic_hann(Index len);

struct MfccConfig {
  Index sample_rate = 16000;
  Real frame_len_s = 0.015;
  Real frame_shift_s = 0.004;
  Index n_coeffs = 13;  // kept DCT coefficients
  Index n_mels = 26;
  Index n_fft = 512;
  Real fmin = 0.0;
  Real fmax = 8000.0;
  Real log_floor = 1e-10;

  Index frame_len() const;    // round(frame_len_s * sample_rate)
  Index frame_shift() const;  // round(frame_shift_s * sample_rate)

  /// Frames produced for a clip of n samples: floor((n - len)/shift) + 1.
  Index frame_count(Index n_samples) const;

  void validate() const;
};

/// Constant bases for one config: periodic Hann window, one-sided DFT
/// cos/sin maps (zero padding to n_fft folded into the basis), triangular
/// HTK-mel filterbank evaluated at bin centers, orthonormal DCT-II columns.
struct MfccBasis {
  Vec window;       // frame_len
  Mat dft_cos;      // frame_len x (n_fft/2 + 1)
  Mat dft_sin;      // frame_len x (n_fft/2 + 1)
  Mat mel_filters;  // (n_fft/2 + 1) x n_mels
  Mat dct;          // n_mels x n_coeffs

  static MfccBasis build(const MfccConfig& cfg);
};

/// Windowed frames as rows; no transform applied.
Mat frame_signal(const AudioClip& clip, const MfccConfig& cfg);

/// One-sided power spectrum per frame row: Re^2 + Im^2 of the DFT, shape
/// {frames, n_fft/2 + 1}.
Tensor power_spectrum_graph(const Tensor& frames, const MfccBasis& basis);

/// Differentiable MFCC of a rank-1 sample tensor: frames -> one-sided power
/// spectrum -> mel energies -> floored log -> DCT, keeping n_coeffs columns.
Tensor mfcc_graph(const Tensor& samples, const MfccConfig& cfg, const MfccBasis& basis);

/// Plain MFCC of a clip; identical numbers to the graph path on a constant
/// leaf.
Mat mfcc(const AudioClip& clip, const MfccConfig& cfg);

enum class AlignMode { mean_pool, stack };

const char* to_string(AlignMode m);
AlignMode align_mode_from(const std::string& s);

/// Groups consecutive MFCC rows so the audio token count equals the video
/// frame count: the first video_T * frames_per_step rows are either averaged
/// per group (rows stay width M) or stacked (rows widen to frames_per_step*M).
/// Throws AlignmentError when fewer rows are available.
Tensor align_audio_block(const Tensor& mfcc_rows, Index video_T, Index frames_per_step,
                         AlignMode mode);

/// Per-clip cepstral mean removal with a fixed gain: subtracts each column's
/// mean over the rows, then multiplies by gain. Floored log mel bins put a
/// large static offset on every cepstral vector; removing it leaves the
/// zero-mean trajectories the encoders attend over. rows: {T, M}.
Tensor center_scale_rows(const Tensor& rows, Real gain);

}  // namespace avdet
