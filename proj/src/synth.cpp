// SPDX-License-Identifier: Apache-2.0

#include "avdet/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace avdet {

namespace {

constexpr Real kPi = 3.14159265358979323846;


struct SampleSpec {
  ForgeryType type = ForgeryType::none;
  Real phase_audio = 0;
  Real phase_video = 0;
  bool horizontal = false;
};

SampleSpec draw_spec(ForgeryType type, const SynthConfig& cfg, Rng& rng) {
  SampleSpec s;
  s.type = type;
  const Index base = static_cast<Index>(rng.below(static_cast<std::uint64_t>(cfg.n_phases)));
  // Offsets in [min_gap, n - min_gap] keep the circular class distance at
  // least min_gap in either direction.
  const auto shifted = [&](Index idx) {
    const std::uint64_t span =
        static_cast<std::uint64_t>(cfg.n_phases - 2 * cfg.min_phase_gap + 1);
    const Index offset = cfg.min_phase_gap + static_cast<Index>(rng.below(span));
    return (idx + offset) % cfg.n_phases;
  };
  Index audio_idx = base;
  Index video_idx = base;
  switch (type) {
    case ForgeryType::none:
      break;
    case ForgeryType::video_only:
      s.horizontal = true;
      break;
    case ForgeryType::audio_only:
      audio_idx = shifted(base);
      break;
    case ForgeryType::desync:
      video_idx = shifted(base);
      break;
  }
  const Real unit = 2 * kPi / static_cast<Real>(cfg.n_phases);
  s.phase_audio = static_cast<Real>(audio_idx) * unit;
  s.phase_video = static_cast<Real>(video_idx) * unit;
  return s;
}

// The shared modulator both streams follow: one full cycle per clip.
Real modulator(Real t, Real phase, const SynthConfig& cfg) {
  return std::sin(2 * kPi * t / cfg.clip_seconds() + phase);
}

AudioClip render_audio(const SampleSpec& spec, const SynthConfig& cfg, Rng& rng) {
  AudioClip clip;
  clip.sample_rate = cfg.sample_rate;
  clip.samples.resize(cfg.samples_per_clip);
  const Real f_mod = 1.0 / cfg.clip_seconds();
  // The modulator drives the tone twice over: instantaneous frequency
  // carrier + dev*m(t) (the phase below is its exact integral, anchored so
  // the clip starts at zero) and an amplitude envelope following m(t).
  for (Index n = 0; n < cfg.samples_per_clip; ++n) {
    const Real t = static_cast<Real>(n) / static_cast<Real>(cfg.sample_rate);
    const Real phi = 2 * kPi * cfg.carrier_hz * t -
                     (cfg.freq_dev / f_mod) *
                         (std::cos(2 * kPi * f_mod * t + spec.phase_audio) -
                          std::cos(spec.phase_audio));
    const Real envelope = (1.0 + cfg.am_depth * modulator(t, spec.phase_audio, cfg)) /
                          (1.0 + cfg.am_depth);
    clip.samples[n] =
        cfg.amplitude * envelope * std::sin(phi) + cfg.audio_noise * rng.normal();
  }
  return clip;
}

FaceBlock render_video(const SampleSpec& spec, const SynthConfig& cfg, Rng& rng) {
  FaceBlock block;
  block.t = cfg.frames;
  block.c = cfg.channels;
  block.h = cfg.height;
  block.w = cfg.width;
  block.pixels.resize(cfg.frames * cfg.channels * cfg.height * cfg.width);
  const Real k = static_cast<Real>(cfg.spatial_cycles);
  Index at = 0;
  // The grating contrast follows the modulator (amplitude coding), so a
  // linear readout of any frame recovers m(t) up to the fixed pattern.
  for (Index t = 0; t < cfg.frames; ++t) {
    const Real t_mid = (static_cast<Real>(t) + 0.5) * cfg.step_seconds;
    const Real m = modulator(t_mid, spec.phase_video, cfg);
    for (Index c = 0; c < cfg.channels; ++c) {
      for (Index y = 0; y < cfg.height; ++y) {
        for (Index x = 0; x < cfg.width; ++x) {
          const Real axis = spec.horizontal
                                ? static_cast<Real>(y) / static_cast<Real>(cfg.height)
                                : static_cast<Real>(x) / static_cast<Real>(cfg.width);
          const Real clean = 0.5 + cfg.contrast * m * std::sin(2 * kPi * k * axis);
          block.pixels[at++] = std::clamp(clean + cfg.video_noise * rng.normal(), 0.0, 1.0);
        }
      }
    }
  }
  return block;
}

}  // namespace

const char* to_string(ForgeryType t) {
  switch (t) {
    case ForgeryType::none: return "none";
    case ForgeryType::video_only: return "video_only";
    case ForgeryType::audio_only: return "audio_only";
    default: return "desync";
  }
}

ForgeryType forgery_type_from(const std::string& s) {
  if (s == "none") return ForgeryType::none;
  if (s == "video_only") return ForgeryType::video_only;
  if (s == "audio_only") return ForgeryType::audio_only;
  if (s == "desync") return ForgeryType::desync;
  throw ConfigError("unknown forgery type '" + s + "'");
}

void ForgeryMix::validate() const {
  if (video_only < 0 || audio_only < 0 || desync < 0) {
    throw ConfigError("forgery mix proportions must be non-negative");
  }
  const Real sum = video_only + audio_only + desync;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("forgery mix must sum to 1, got " + std::to_string(sum));
  }
}

SynthConfig SynthConfig::for_model(const ModelConfig& model) {
  SynthConfig cfg;
  cfg.frames = model.frames;
  cfg.channels = model.channels;
  cfg.height = model.height;
  cfg.width = model.width;
  cfg.sample_rate = model.mfcc.sample_rate;
  cfg.samples_per_clip = model.min_audio_samples();
  cfg.step_seconds = static_cast<Real>(model.frames_per_step) * model.mfcc.frame_shift_s;
  cfg.validate();
  return cfg;
}

void SynthConfig::validate() const {
  if (frames < 1 || channels < 1 || height < 1 || width < 1) {
    throw ConfigError("synth: bad block geometry");
  }
  if (sample_rate < 1 || samples_per_clip < 1 || step_seconds <= 0) {
    throw ConfigError("synth: bad audio timing");
  }
  if (amplitude <= 0 || amplitude > 1) throw ConfigError("synth: amplitude must be in (0, 1]");
  if (contrast <= 0 || contrast > 0.5) throw ConfigError("synth: contrast must be in (0, 0.5]");
  if (am_depth < 0 || am_depth >= 1) throw ConfigError("synth: am_depth must be in [0, 1)");
  if (carrier_hz <= 0) throw ConfigError("synth: carrier must be positive");
  if (freq_dev <= 0 || carrier_hz + freq_dev >= static_cast<Real>(sample_rate) / 2) {
    throw ConfigError("synth: tone exceeds the Nyquist band");
  }
  if (n_phases < 4) throw ConfigError("synth: need at least 4 phase classes");
  if (min_phase_gap < 1 || 2 * min_phase_gap > n_phases) {
    throw ConfigError("synth: phase gap must be in [1, n_phases/2]");
  }
  if (video_noise < 0 || video_noise > 0.2 || audio_noise < 0 || audio_noise > 0.2) {
    throw ConfigError("synth: noise levels must be in [0, 0.2]");
  }
  if (spatial_cycles < 1 || 2 * spatial_cycles >= width || 2 * spatial_cycles >= height) {
    throw ConfigError("synth: grating must fit the frame with a clean quadrature");
  }
}

std::vector<SyntheticSample> generate_dataset(Index n, std::uint64_t seed, const ForgeryMix& mix,
                                              const SynthConfig& cfg) {
  if (n < 2) throw ConfigError("generate_dataset: need at least 2 samples");
  mix.validate();
  cfg.validate();

  const Index n_fake = n / 2;
  const Index n_real = n - n_fake;

  // Largest-remainder split of the fake half across forgery types.
  const std::array<std::pair<ForgeryType, Real>, 3> props = {{
      {ForgeryType::video_only, mix.video_only},
      {ForgeryType::audio_only, mix.audio_only},
      {ForgeryType::desync, mix.desync},
  }};
  std::array<Index, 3> counts{};
  std::array<Real, 3> remainders{};
  Index assigned = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const Real exact = props[k].second * static_cast<Real>(n_fake);
    counts[k] = static_cast<Index>(std::floor(exact));
    remainders[k] = exact - std::floor(exact);
    assigned += counts[k];
  }
  while (assigned < n_fake) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < 3; ++k) {
      if (remainders[k] > remainders[best]) best = k;
    }
    ++counts[best];
    remainders[best] = -1;
    ++assigned;
  }

  std::vector<ForgeryType> plan;
  plan.reserve(n);
  plan.assign(n_real, ForgeryType::none);
  for (std::size_t k = 0; k < 3; ++k) plan.insert(plan.end(), counts[k], props[k].first);

  const Rng root(seed);
  std::vector<SyntheticSample> out;
  out.reserve(n);
  for (Index i = 0; i < n; ++i) {
    Rng rng = root.fork(static_cast<std::uint64_t>(i));
    const SampleSpec spec = draw_spec(plan[i], cfg, rng);
    SyntheticSample s;
    s.face = render_video(spec, cfg, rng);
    s.audio = render_audio(spec, cfg, rng);
    s.forgery = spec.type;
    s.label = spec.type == ForgeryType::none ? 0 : 1;
    out.push_back(std::move(s));
  }
  Rng order = root.fork(static_cast<std::uint64_t>(n));
  order.shuffle(out);
  return out;
}

Real coupling_statistic(const SyntheticSample& sample, const SynthConfig& cfg) {
  const FaceBlock& b = sample.face;
  if (b.t < 2) throw ConfigError("coupling: need at least two frames");
  const Index spp = static_cast<Index>(std::lround(cfg.step_seconds * cfg.sample_rate));

  // Signed grating contrast per frame from channel 0: projecting onto the
  // vertical carrier recovers contrast * m(t) exactly. A horizontal pattern
  // has no vertical carrier, so the projection collapses and the statistic
  // reports zero coupling.
  std::vector<Real> video_traj(b.t);
  Real mean_mag = 0;
  for (Index t = 0; t < b.t; ++t) {
    Real proj = 0;
    for (Index y = 0; y < b.h; ++y) {
      for (Index x = 0; x < b.w; ++x) {
        const Real alpha = 2 * kPi * static_cast<Real>(cfg.spatial_cycles) *
                           static_cast<Real>(x) / static_cast<Real>(b.w);
        proj += b.pixels[(t * b.c * b.h + y) * b.w + x] * std::sin(alpha);
      }
    }
    video_traj[t] = 2 * proj / static_cast<Real>(b.w * b.h);
    mean_mag += std::abs(video_traj[t]);
  }
  mean_mag /= static_cast<Real>(b.t);
  if (mean_mag < 0.1 * cfg.contrast) return 0.0;

  // Tone frequency per step via the lag-two autocorrelation identity
  // sum s[n-1] s[n+1] / sum s[n]^2 ~= cos(2 w) for a slow sinusoid.
  std::vector<Real> tone_freq(b.t);
  for (Index t = 0; t < b.t; ++t) {
    const Index begin = t * spp;
    const Index end = std::min(begin + spp, sample.audio.samples.size());
    if (end - begin < 3) return 0.0;
    Real num = 0, den = 0;
    for (Index n = begin + 1; n + 1 < end; ++n) {
      num += sample.audio.samples[n - 1] * sample.audio.samples[n + 1];
      den += sample.audio.samples[n] * sample.audio.samples[n];
    }
    if (den <= 0) return 0.0;
    const Real r = std::clamp(num / den, -1.0, 1.0);
    tone_freq[t] = std::acos(r) / 2 * static_cast<Real>(cfg.sample_rate) / (2 * kPi);
  }

  // Pearson correlation between the two standardized trajectories.
  auto standardized = [&](const std::vector<Real>& v) {
    Real mean = 0;
    for (Real x : v) mean += x;
    mean /= static_cast<Real>(v.size());
    Real var = 0;
    for (Real x : v) var += (x - mean) * (x - mean);
    var /= static_cast<Real>(v.size());
    std::vector<Real> out(v.size());
    if (var < 1e-12) return std::vector<Real>();
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean) / std::sqrt(var);
    return out;
  };
  const std::vector<Real> vp = standardized(video_traj);
  const std::vector<Real> tf = standardized(tone_freq);
  if (vp.empty() || tf.empty()) return 0.0;
  Real corr = 0;
  for (Index t = 0; t < b.t; ++t) corr += vp[t] * tf[t];
  return corr / static_cast<Real>(b.t);
}

}  // namespace avdet
