// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "avdet/audio.hpp"
#include "avdet/audio_io.hpp"
#include "avdet/gradcheck.hpp"

using namespace avdet;

namespace {

AudioClip tone_clip(Index n_samples, Real freq, Real amplitude, Index rate, uint64_t noise_seed,
                    Real noise_level) {
  AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.resize(n_samples);
  Rng rng(noise_seed);
  for (Index i = 0; i < n_samples; ++i) {
    const Real t = static_cast<Real>(i) / static_cast<Real>(rate);
    clip.samples[i] =
        amplitude * std::sin(2.0 * M_PI * freq * t) + noise_level * rng.uniform(-1.0, 1.0);
  }
  return clip;
}

// Independent mel filter weight, straight from the definitions.
double oracle_mel_weight(double f_hz, int m, const MfccConfig& cfg) {
  auto to_mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
  auto to_hz = [](double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); };
  const double lo_mel = to_mel(cfg.fmin), hi_mel = to_mel(cfg.fmax);
  const double step = (hi_mel - lo_mel) / (cfg.n_mels + 1);
  const double left = to_hz(lo_mel + m * step);
  const double center = to_hz(lo_mel + (m + 1) * step);
  const double right = to_hz(lo_mel + (m + 2) * step);
  if (f_hz > left && f_hz < center) return (f_hz - left) / (center - left);
  if (f_hz >= center && f_hz < right) return (right - f_hz) / (right - center);
  return 0.0;
}

}  // namespace

TEST_CASE("frame count follows the floor formula") {
  MfccConfig cfg;  // 16 kHz, 15 ms / 4 ms
  CHECK(cfg.frame_len() == 240);
  CHECK(cfg.frame_shift() == 64);
  CHECK(cfg.frame_count(16000) == 247);

  AudioClip clip;
  clip.sample_rate = 16000;
  clip.samples = Vec::Zero(16000);
  CHECK(frame_signal(clip, cfg).rows() == 247);
}

TEST_CASE("zero signal frames to zero rows") {
  MfccConfig cfg;
  AudioClip clip;
  clip.sample_rate = 16000;
  clip.samples = Vec::Zero(2000);
  Mat frames = frame_signal(clip, cfg);
  CHECK(frames.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("periodic window starts at zero") {
  Vec w = periodic_hann(240);
  CHECK(w[0] == 0.0);
  CHECK(w[120] == doctest::Approx(1.0).epsilon(1e-12));
  // Periodic form: w[n] mirrors around len/2 with w[len-n] == w[n].
  CHECK(w[1] == doctest::Approx(w[239]).epsilon(1e-12));
}

TEST_CASE("too-short clips are rejected") {
  MfccConfig cfg;
  AudioClip clip;
  clip.sample_rate = 16000;
  clip.samples = Vec::Zero(100);
  CHECK_THROWS_AS(frame_signal(clip, cfg), EmptyInputError);
}

TEST_CASE("config validation rejects bad band edges") {
  MfccConfig cfg;
  cfg.fmax = 9000.0;  // above Nyquist at 16 kHz
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = MfccConfig{};
  cfg.fmin = 5000.0;
  cfg.fmax = 4000.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = MfccConfig{};
  cfg.n_fft = 128;  // shorter than the 240-sample frame
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("silence produces identical frames with only a DC coefficient") {
  MfccConfig cfg;
  AudioClip clip;
  clip.sample_rate = 16000;
  clip.samples = Vec::Zero(2000);
  Mat m = mfcc(clip, cfg);
  REQUIRE(m.rows() == cfg.frame_count(2000));
  REQUIRE(m.cols() == 13);
  const Real expected_c0 =
      std::sqrt(static_cast<Real>(cfg.n_mels)) * std::log(cfg.log_floor);
  for (Index r = 0; r < m.rows(); ++r) {
    CHECK(m(r, 0) == doctest::Approx(expected_c0).epsilon(1e-12));
    for (Index c = 1; c < m.cols(); ++c) CHECK(std::abs(m(r, c)) < 1e-10);
    for (Index c = 0; c < m.cols(); ++c) CHECK(m(r, c) == m(0, c));
  }
}

TEST_CASE("power spectrum matches a direct quadratic DFT") {
  MfccConfig cfg;
  AudioClip clip = tone_clip(400, 440.0, 0.5, 16000, 1, 0.0);
  const MfccBasis basis = MfccBasis::build(cfg);
  NoGradGuard ng;
  Tensor frames =
      frame_rows(Tensor::from_vector(clip.samples), cfg.frame_len(), cfg.frame_shift(),
                 basis.window);
  Tensor power = power_spectrum_graph(frames, basis);
  const Index bins = cfg.n_fft / 2 + 1;
  REQUIRE(power.shape() == Shape{3, bins});

  for (Index fr = 0; fr < 3; ++fr) {
    for (Index k = 0; k < bins; ++k) {
      double re = 0, im = 0;
      for (Index n = 0; n < cfg.frame_len(); ++n) {
        const double x = frames.flat()[fr * cfg.frame_len() + n];
        const double ang = 2.0 * M_PI * k * n / static_cast<double>(cfg.n_fft);
        re += x * std::cos(ang);
        im -= x * std::sin(ang);
      }
      const double expect = re * re + im * im;
      const double got = power.flat()[fr * bins + k];
      CHECK(std::abs(got - expect) <= 1e-9 * std::max(1.0, std::abs(expect)));
    }
  }
}

TEST_CASE("spectral energy satisfies the discrete Parseval identity") {
  MfccConfig cfg;
  AudioClip clip = tone_clip(1600, 440.0, 0.4, 16000, 2, 0.01);
  const MfccBasis basis = MfccBasis::build(cfg);
  NoGradGuard ng;
  Tensor frames =
      frame_rows(Tensor::from_vector(clip.samples), cfg.frame_len(), cfg.frame_shift(),
                 basis.window);
  Tensor power = power_spectrum_graph(frames, basis);
  const Index bins = cfg.n_fft / 2 + 1;
  for (Index fr = 0; fr < frames.shape()[0]; ++fr) {
    double time_energy = 0;
    for (Index n = 0; n < cfg.frame_len(); ++n) {
      const double x = frames.flat()[fr * cfg.frame_len() + n];
      time_energy += x * x;
    }
    // Real input: interior bins carry their conjugate twins' energy too.
    double spec_energy = power.flat()[fr * bins] + power.flat()[fr * bins + bins - 1];
    for (Index k = 1; k < bins - 1; ++k) spec_energy += 2.0 * power.flat()[fr * bins + k];
    spec_energy /= static_cast<double>(cfg.n_fft);
    CHECK(std::abs(spec_energy - time_energy) <= 1e-9 * std::max(1.0, time_energy));
  }
}

TEST_CASE("mfcc matches an end-to-end scalar pipeline") {
  MfccConfig cfg;
  AudioClip clip = tone_clip(1600, 440.0, 0.4, 16000, 3, 0.01);
  Mat got = mfcc(clip, cfg);
  const Index frames = cfg.frame_count(1600);
  REQUIRE(got.rows() == frames);

  const Index L = cfg.frame_len(), S = cfg.frame_shift();
  const Index bins = cfg.n_fft / 2 + 1;
  for (Index fr = 0; fr < frames; ++fr) {
    // Window + power spectrum.
    std::vector<double> windowed(L);
    for (Index n = 0; n < L; ++n) {
      const double w = 0.5 * (1.0 - std::cos(2.0 * M_PI * n / static_cast<double>(L)));
      windowed[n] = clip.samples[fr * S + n] * w;
    }
    std::vector<double> power(bins);
    for (Index k = 0; k < bins; ++k) {
      double re = 0, im = 0;
      for (Index n = 0; n < L; ++n) {
        const double ang = 2.0 * M_PI * k * n / static_cast<double>(cfg.n_fft);
        re += windowed[n] * std::cos(ang);
        im -= windowed[n] * std::sin(ang);
      }
      power[k] = re * re + im * im;
    }
    // Mel energies, log, DCT.
    std::vector<double> logmel(cfg.n_mels);
    for (Index m = 0; m < cfg.n_mels; ++m) {
      double e = 0;
      for (Index k = 0; k < bins; ++k) {
        e += power[k] * oracle_mel_weight(k * 16000.0 / cfg.n_fft, static_cast<int>(m), cfg);
      }
      logmel[m] = std::log(std::max(e, cfg.log_floor));
    }
    for (Index c = 0; c < cfg.n_coeffs; ++c) {
      double acc = 0;
      for (Index m = 0; m < cfg.n_mels; ++m) {
        acc += logmel[m] * std::cos(M_PI * c * (2.0 * m + 1.0) / (2.0 * cfg.n_mels));
      }
      acc *= c == 0 ? std::sqrt(1.0 / cfg.n_mels) : std::sqrt(2.0 / cfg.n_mels);
      CHECK(std::abs(got(fr, c) - acc) < 1e-8);
    }
  }
}

TEST_CASE("doubling the amplitude shifts only the DC coefficient") {
  MfccConfig cfg;
  AudioClip clip = tone_clip(1600, 440.0, 0.3, 16000, 4, 0.01);
  AudioClip doubled = clip;
  doubled.samples *= 2.0;
  Mat a = mfcc(clip, cfg);
  Mat b = mfcc(doubled, cfg);
  const Real dc_shift = std::sqrt(static_cast<Real>(cfg.n_mels)) * std::log(4.0);
  for (Index r = 0; r < a.rows(); ++r) {
    CHECK(b(r, 0) - a(r, 0) == doctest::Approx(dc_shift).epsilon(1e-9));
    for (Index c = 1; c < a.cols(); ++c) CHECK(std::abs(b(r, c) - a(r, c)) < 1e-9);
  }
}

TEST_CASE("mfcc is bit-deterministic") {
  MfccConfig cfg;
  AudioClip clip = tone_clip(1600, 330.0, 0.4, 16000, 5, 0.02);
  Mat a = mfcc(clip, cfg);
  Mat b = mfcc(clip, cfg);
  for (Index i = 0; i < a.size(); ++i) CHECK(a.data()[i] == b.data()[i]);
}

TEST_CASE("mel filters are non-negative and adjacent filters overlap") {
  MfccConfig cfg;
  const MfccBasis basis = MfccBasis::build(cfg);
  CHECK(basis.mel_filters.minCoeff() >= 0.0);
  for (Index m = 0; m + 1 < cfg.n_mels; ++m) {
    bool overlap = false;
    for (Index k = 0; k < basis.mel_filters.rows(); ++k) {
      if (basis.mel_filters(k, m) > 0 && basis.mel_filters(k, m + 1) > 0) overlap = true;
    }
    CHECK(overlap);
  }
  for (Index m = 0; m < cfg.n_mels; ++m) {
    CHECK(basis.mel_filters.col(m).maxCoeff() > 0.0);
  }
}

TEST_CASE("gradient flows from mfcc back into the waveform") {
  MfccConfig cfg;
  const MfccBasis basis = MfccBasis::build(cfg);
  AudioClip clip = tone_clip(400, 500.0, 0.4, 16000, 6, 0.02);
  std::vector<Tensor> leaves = {Tensor::from_vector(clip.samples, true)};
  Rng rng(7);
  Vec w(3 * cfg.n_coeffs);
  for (Index i = 0; i < w.size(); ++i) w[i] = rng.normal();
  const Real err = fd_max_rel_err(
      [&] {
        Tensor m = mfcc_graph(leaves[0], cfg, basis);
        return mean_all(mul(m, Tensor::from_flat({3, cfg.n_coeffs}, w)));
      },
      leaves, 1e-5);
  CHECK(err < 1e-5);
}

TEST_CASE("mean pooling groups consecutive feature rows") {
  Mat rows(60, 13);
  Rng rng(8);
  for (Index i = 0; i < rows.size(); ++i) rows.data()[i] = rng.normal();
  NoGradGuard ng;
  Tensor aligned = align_audio_block(Tensor::from_matrix(rows), 30, 2, AlignMode::mean_pool);
  REQUIRE(aligned.shape() == Shape{30, 13});
  for (Index c = 0; c < 13; ++c) {
    CHECK(aligned.matrix()(0, c) ==
          doctest::Approx(0.5 * (rows(0, c) + rows(1, c))).epsilon(1e-14));
  }
}

TEST_CASE("one feature row per step aligns as an identity slice") {
  Mat rows(40, 5);
  for (Index i = 0; i < rows.size(); ++i) rows.data()[i] = static_cast<Real>(i);
  NoGradGuard ng;
  Tensor aligned = align_audio_block(Tensor::from_matrix(rows), 32, 1, AlignMode::mean_pool);
  REQUIRE(aligned.shape() == Shape{32, 5});
  for (Index r = 0; r < 32; ++r) {
    for (Index c = 0; c < 5; ++c) CHECK(aligned.matrix()(r, c) == rows(r, c));
  }
}

TEST_CASE("stack alignment widens rows by the group size") {
  Mat rows(60, 13);
  Rng rng(9);
  for (Index i = 0; i < rows.size(); ++i) rows.data()[i] = rng.normal();
  NoGradGuard ng;
  Tensor aligned = align_audio_block(Tensor::from_matrix(rows), 30, 2, AlignMode::stack);
  REQUIRE(aligned.shape() == Shape{30, 26});
  CHECK(aligned.matrix()(0, 0) == rows(0, 0));
  CHECK(aligned.matrix()(0, 13) == rows(1, 0));
  CHECK(aligned.matrix()(29, 25) == rows(59, 12));
}

TEST_CASE("alignment rejects short feature matrices") {
  NoGradGuard ng;
  Tensor rows = Tensor::zeros({10, 13});
  CHECK_THROWS_AS(align_audio_block(rows, 30, 2, AlignMode::mean_pool), AlignmentError);
}

TEST_CASE("wav round trip preserves samples to quantization precision") {
  AudioClip clip = tone_clip(800, 440.0, 0.7, 16000, 10, 0.0);
  const auto path = std::filesystem::temp_directory_path() / "avdet_roundtrip.wav";
  write_wav(path, clip);
  AudioClip back = read_wav(path);
  REQUIRE(back.sample_rate == 16000);
  REQUIRE(back.samples.size() == clip.samples.size());
  for (Index i = 0; i < clip.samples.size(); ++i) {
    CHECK(std::abs(back.samples[i] - clip.samples[i]) <= 1.0 / 32767.0);
  }
  std::filesystem::remove(path);
}

TEST_CASE("raw float32 audio round trips exactly at float precision") {
  AudioClip clip;
  clip.sample_rate = 16000;
  clip.samples.resize(500);
  Rng rng(11);
  for (Index i = 0; i < 500; ++i) {
    clip.samples[i] = static_cast<Real>(static_cast<float>(rng.uniform(-1.0, 1.0)));
  }
  const auto path = std::filesystem::temp_directory_path() / "avdet_roundtrip.f32";
  write_raw_audio(path, clip);
  AudioClip back = read_raw_audio(path);
  REQUIRE(back.sample_rate == clip.sample_rate);
  REQUIRE(back.samples.size() == clip.samples.size());
  for (Index i = 0; i < 500; ++i) CHECK(back.samples[i] == clip.samples[i]);
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".json");
}

TEST_CASE("wav reader rejects non-wav bytes") {
  const auto path = std::filesystem::temp_directory_path() / "avdet_notawav.bin";
  {
    std::ofstream f(path, std::ios::binary);
    f << "certainly not audio";
  }
  CHECK_THROWS_AS(read_wav(path), IoError);
  std::filesystem::remove(path);
}
