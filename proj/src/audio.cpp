// SPDX-License-Identifier: Apache-2.0

#include "avdet/audio.hpp"

#include <cmath>

namespace avdet {

Index MfccConfig::frame_len() const {
  return static_cast<Index>(std::llround(frame_len_s * static_cast<Real>(sample_rate)));
}

Index MfccConfig::frame_shift() const {
  return static_cast<Index>(std::llround(frame_shift_s * static_cast<Real>(sample_rate)));
}

Index MfccConfig::frame_count(Index n_samples) const {
  const Index len = frame_len();
  if (n_samples < len) return 0;
  return (n_samples - len) / frame_shift() + 1;
}

void MfccConfig::validate() const {
  if (sample_rate <= 0) throw ConfigError("sample rate must be positive");
  if (frame_shift_s <= 0 || frame_len_s < frame_shift_s) {
    throw ConfigError("frame length must be >= shift > 0");
  }
  if (frame_len() <= 0) throw ConfigError("frame length rounds to zero samples");
  if (n_fft < frame_len()) throw ConfigError("n_fft shorter than the frame");
  if (fmin < 0 || fmax <= fmin) throw ConfigError("mel band edges must satisfy 0 <= fmin < fmax");
  if (fmax > static_cast<Real>(sample_rate) / 2) {
    throw ConfigError("fmax exceeds the Nyquist frequency");
  }
  if (n_mels < 2) throw ConfigError("need at least two mel filters");
  if (n_coeffs < 1 || n_coeffs > n_mels) {
    throw ConfigError("kept coefficients must lie in [1, n_mels]");
  }
  if (log_floor <= 0) throw ConfigError("log floor must be positive");
}

Vec periodic_hann(Index len) {
  Vec w(len);
  for (Index n = 0; n < len; ++n) {
    w[n] = 0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<Real>(n) / static_cast<Real>(len)));
  }
  return w;
}

namespace {

Real hz_to_mel(Real f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
Real mel_to_hz(Real m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

}  // namespace

MfccBasis MfccBasis::build(const MfccConfig& cfg) {
  cfg.validate();
  const Index len = cfg.frame_len();
  const Index bins = cfg.n_fft / 2 + 1;
  MfccBasis b;

  b.window = periodic_hann(len);

  // Zero padding to n_fft is implicit: samples beyond the frame contribute
  // nothing, so the basis only needs the first `len` rows.
  b.dft_cos.resize(len, bins);
  b.dft_sin.resize(len, bins);
  for (Index n = 0; n < len; ++n) {
    for (Index k = 0; k < bins; ++k) {
      const Real angle =
          2.0 * M_PI * static_cast<Real>(k) * static_cast<Real>(n) / static_cast<Real>(cfg.n_fft);
      b.dft_cos(n, k) = std::cos(angle);
      b.dft_sin(n, k) = std::sin(angle);
    }
  }

  const Real mel_lo = hz_to_mel(cfg.fmin);
  const Real mel_hi = hz_to_mel(cfg.fmax);
  std::vector<Real> edges(cfg.n_mels + 2);
  for (Index j = 0; j < cfg.n_mels + 2; ++j) {
    edges[j] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<Real>(j) /
                                      static_cast<Real>(cfg.n_mels + 1));
  }
  b.mel_filters = Mat::Zero(bins, cfg.n_mels);
  for (Index k = 0; k < bins; ++k) {
    const Real f =
        static_cast<Real>(k) * static_cast<Real>(cfg.sample_rate) / static_cast<Real>(cfg.n_fft);
    for (Index m = 0; m < cfg.n_mels; ++m) {
      const Real lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
      if (f > lo && f < mid) {
        b.mel_filters(k, m) = (f - lo) / (mid - lo);
      } else if (f >= mid && f < hi) {
        b.mel_filters(k, m) = (hi - f) / (hi - mid);
      }
    }
  }

  b.dct.resize(cfg.n_mels, cfg.n_coeffs);
  const Real norm0 = std::sqrt(1.0 / static_cast<Real>(cfg.n_mels));
  const Real norm = std::sqrt(2.0 / static_cast<Real>(cfg.n_mels));
  for (Index j = 0; j < cfg.n_mels; ++j) {
    for (Index k = 0; k < cfg.n_coeffs; ++k) {
      b.dct(j, k) = (k == 0 ? norm0 : norm) *
                    std::cos(M_PI * static_cast<Real>(k) * (2.0 * static_cast<Real>(j) + 1.0) /
                             (2.0 * static_cast<Real>(cfg.n_mels)));
    }
  }
  return b;
}

Mat frame_signal(const AudioClip& clip, const MfccConfig& cfg) {
  if (clip.sample_rate != cfg.sample_rate) {
    throw ConfigError("clip sample rate " + std::to_string(clip.sample_rate) +
                      " does not match config rate " + std::to_string(cfg.sample_rate));
  }
  NoGradGuard ng;
  Tensor framed = frame_rows(Tensor::from_vector(clip.samples), cfg.frame_len(),
                             cfg.frame_shift(), periodic_hann(cfg.frame_len()));
  return framed.matrix();
}

Tensor power_spectrum_graph(const Tensor& frames, const MfccBasis& basis) {
  Tensor re = matmul(frames, Tensor::from_matrix(basis.dft_cos));
  Tensor im = matmul(frames, Tensor::from_matrix(basis.dft_sin));
  return add(mul(re, re), mul(im, im));
}

Tensor mfcc_graph(const Tensor& samples, const MfccConfig& cfg, const MfccBasis& basis) {
  Tensor frames = frame_rows(samples, cfg.frame_len(), cfg.frame_shift(), basis.window);
  Tensor power = power_spectrum_graph(frames, basis);
  Tensor mel = matmul(power, Tensor::from_matrix(basis.mel_filters));
  Tensor logged = log_floored(mel, cfg.log_floor);
  return matmul(logged, Tensor::from_matrix(basis.dct));
}

Mat mfcc(const AudioClip& clip, const MfccConfig& cfg) {
  if (clip.sample_rate != cfg.sample_rate) {
    throw ConfigError("clip sample rate " + std::to_string(clip.sample_rate) +
                      " does not match config rate " + std::to_string(cfg.sample_rate));
  }
  const MfccBasis basis = MfccBasis::build(cfg);
  NoGradGuard ng;
  return mfcc_graph(Tensor::from_vector(clip.samples), cfg, basis).matrix();
}

const char* to_string(AlignMode m) {
  return m == AlignMode::mean_pool ? "mean_pool" : "stack";
}

AlignMode align_mode_from(const std::string& s) {
  if (s == "mean_pool") return AlignMode::mean_pool;
  if (s == "stack") return AlignMode::stack;
  throw ConfigError("unknown align mode '" + s + "'");
}

Tensor align_audio_block(const Tensor& mfcc_rows, Index video_T, Index frames_per_step,
                         AlignMode mode) {
  if (mfcc_rows.rank() != 2) throw ShapeError("alignment input must be a {frames, M} matrix");
  if (video_T <= 0 || frames_per_step <= 0) {
    throw ConfigError("alignment needs positive step counts");
  }
  const Index needed = video_T * frames_per_step;
  if (mfcc_rows.shape()[0] < needed) {
    throw AlignmentError("have " + std::to_string(mfcc_rows.shape()[0]) + " feature rows, need " +
                         std::to_string(needed));
  }
  Tensor head = mfcc_rows.shape()[0] == needed ? mfcc_rows : slice_rows(mfcc_rows, 0, needed);
  if (mode == AlignMode::stack) {
    return reshape(head, {video_T, frames_per_step * mfcc_rows.shape()[1]});
  }
  Mat pool = Mat::Zero(video_T, needed);
  for (Index t = 0; t < video_T; ++t) {
    for (Index j = 0; j < frames_per_step; ++j) {
      pool(t, t * frames_per_step + j) = Real(1) / static_cast<Real>(frames_per_step);
    }
  }
  return matmul(Tensor::from_matrix(pool), head);
}

Tensor center_scale_rows(const Tensor& rows, Real gain) {
  if (rows.rank() != 2) throw ShapeError("center_scale_rows input must be a {T, M} matrix");
  if (!(gain > Real(0)) || !std::isfinite(gain)) {
    throw ConfigError("center_scale_rows gain must be finite and positive");
  }
  const Index t = rows.shape()[0];
  const Mat averager = Mat::Constant(t, t, Real(1) / static_cast<Real>(t));
  return scale(sub(rows, matmul(Tensor::from_matrix(averager), rows)), gain);
}

}  // namespace avdet
