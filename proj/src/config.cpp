// SPDX-License-Identifier: Apache-2.0

#include "avdet/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace avdet {

namespace {

using ordered_json = nlohmann::ordered_json;

/// Applies every key of a JSON object through `put(key, value)`, turning
/// json type errors and unknown keys into ConfigError with the key's path.
template <class Put>
void overlay_object(const ordered_json& j, const char* where, Put put) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& item : j.items()) {
    try {
      if (!put(item.key(), item.value())) {
        throw ConfigError(std::string(where) + ": unknown key '" + item.key() + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string(where) + "." + item.key() + ": " + e.what());
    }
  }
}

void overlay_mfcc(const ordered_json& j, MfccConfig& out) {
  overlay_object(j, "model.mfcc", [&](const std::string& key, const ordered_json& v) {
    if (key == "sample_rate") out.sample_rate = v.get<Index>();
    else if (key == "frame_len_s") out.frame_len_s = v.get<Real>();
    else if (key == "frame_shift_s") out.frame_shift_s = v.get<Real>();
    else if (key == "n_coeffs") out.n_coeffs = v.get<Index>();
    else if (key == "n_mels") out.n_mels = v.get<Index>();
    else if (key == "n_fft") out.n_fft = v.get<Index>();
    else if (key == "fmin") out.fmin = v.get<Real>();
    else if (key == "fmax") out.fmax = v.get<Real>();
    else if (key == "log_floor") out.log_floor = v.get<Real>();
    else return false;
    return true;
  });
}

void overlay_model(const ordered_json& j, ModelConfig& out) {
  overlay_object(j, "model", [&](const std::string& key, const ordered_json& v) {
    if (key == "frames") out.frames = v.get<Index>();
    else if (key == "channels") out.channels = v.get<Index>();
    else if (key == "height") out.height = v.get<Index>();
    else if (key == "width") out.width = v.get<Index>();
    else if (key == "dim") out.dim = v.get<Index>();
    else if (key == "layers") out.layers = v.get<Index>();
    else if (key == "heads") out.heads = v.get<Index>();
    else if (key == "mlp") out.mlp = v.get<bool>();
    else if (key == "ln_eps") out.ln_eps = v.get<Real>();
    else if (key == "tokenizer") out.tokenizer = tokenizer_mode_from(v.get<std::string>());
    else if (key == "patch_size") out.patch_size = v.get<Index>();
    else if (key == "fusion") out.fusion = fusion_mode_from(v.get<std::string>());
    else if (key == "weight_mode") out.weight_mode = weight_mode_from(v.get<std::string>());
    else if (key == "fusion_heads") out.fusion_heads = v.get<Index>();
    else if (key == "frames_per_step") out.frames_per_step = v.get<Index>();
    else if (key == "align") out.align = align_mode_from(v.get<std::string>());
    else if (key == "audio_gain") out.audio_gain = v.get<Real>();
    else if (key == "video_gain") out.video_gain = v.get<Real>();
    else if (key == "mfcc") overlay_mfcc(v, out.mfcc);
    else return false;
    return true;
  });
}

void overlay_train(const ordered_json& j, TrainConfig& out) {
  overlay_object(j, "train", [&](const std::string& key, const ordered_json& v) {
    if (key == "lr") out.lr = v.get<Real>();
    else if (key == "epochs") out.epochs = v.get<Index>();
    else if (key == "batch_size") out.batch_size = v.get<Index>();
    else if (key == "seed") out.seed = v.get<std::uint64_t>();
    else return false;
    return true;
  });
}

void overlay_synth(const ordered_json& j, SynthConfig& out) {
  overlay_object(j, "synth", [&](const std::string& key, const ordered_json& v) {
    if (key == "frames") out.frames = v.get<Index>();
    else if (key == "channels") out.channels = v.get<Index>();
    else if (key == "height") out.height = v.get<Index>();
    else if (key == "width") out.width = v.get<Index>();
    else if (key == "sample_rate") out.sample_rate = v.get<Index>();
    else if (key == "samples_per_clip") out.samples_per_clip = v.get<Index>();
    else if (key == "step_seconds") out.step_seconds = v.get<Real>();
    else if (key == "carrier_hz") out.carrier_hz = v.get<Real>();
    else if (key == "freq_dev") out.freq_dev = v.get<Real>();
    else if (key == "am_depth") out.am_depth = v.get<Real>();
    else if (key == "amplitude") out.amplitude = v.get<Real>();
    else if (key == "contrast") out.contrast = v.get<Real>();
    else if (key == "spatial_cycles") out.spatial_cycles = v.get<Index>();
    else if (key == "n_phases") out.n_phases = v.get<Index>();
    else if (key == "min_phase_gap") out.min_phase_gap = v.get<Index>();
    else if (key == "video_noise") out.video_noise = v.get<Real>();
    else if (key == "audio_noise") out.audio_noise = v.get<Real>();
    else return false;
    return true;
  });
}

void overlay_mix(const ordered_json& j, ForgeryMix& out) {
  overlay_object(j, "mix", [&](const std::string& key, const ordered_json& v) {
    if (key == "video_only") out.video_only = v.get<Real>();
    else if (key == "audio_only") out.audio_only = v.get<Real>();
    else if (key == "desync") out.desync = v.get<Real>();
    else return false;
    return true;
  });
}

void overlay_data(const ordered_json& j, RunConfig& out) {
  overlay_object(j, "data", [&](const std::string& key, const ordered_json& v) {
    if (key == "n_samples") out.n_samples = v.get<Index>();
    else if (key == "train_frac") out.train_frac = v.get<Real>();
    else if (key == "val_frac") out.val_frac = v.get<Real>();
    else if (key == "test_frac") out.test_frac = v.get<Real>();
    else return false;
    return true;
  });
}

/// The model owns the mode switches; the train section never repeats them.
void sync_train_modes(RunConfig& cfg) {
  cfg.train.fusion = cfg.model.fusion;
  cfg.train.tokenizer = cfg.model.tokenizer;
  cfg.train.weight_mode = cfg.model.weight_mode;
}

/// Geometry fields the synth section inherits from the model unless set.
void rebase_synth_geometry(RunConfig& cfg) {
  const SynthConfig derived = SynthConfig::for_model(cfg.model);
  cfg.synth.frames = derived.frames;
  cfg.synth.channels = derived.channels;
  cfg.synth.height = derived.height;
  cfg.synth.width = derived.width;
  cfg.synth.sample_rate = derived.sample_rate;
  cfg.synth.samples_per_clip = derived.samples_per_clip;
  cfg.synth.step_seconds = derived.step_seconds;
}

}  // namespace

RunConfig RunConfig::desk() {
  RunConfig cfg;
  sync_train_modes(cfg);
  return cfg;
}

RunConfig RunConfig::paper() {
  RunConfig cfg;
  cfg.model = ModelConfig::paper();
  cfg.synth = SynthConfig::for_model(cfg.model);
  sync_train_modes(cfg);
  return cfg;
}

RunConfig preset_from(const std::string& name) {
  if (name == "desk") return RunConfig::desk();
  if (name == "paper") return RunConfig::paper();
  throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  synth.validate();
  mix.validate();
  if (n_samples < 2) throw ConfigError("run: n_samples must be >= 2");
  if (train_frac < 0 || val_frac < 0 || test_frac < 0 ||
      std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
    throw ConfigError("run: split fractions must be non-negative and sum to 1");
  }
  if (train.fusion != model.fusion || train.tokenizer != model.tokenizer ||
      train.weight_mode != model.weight_mode) {
    throw ConfigError("run: train modes must match the model's");
  }
  if (synth.frames != model.frames || synth.channels != model.channels ||
      synth.height != model.height || synth.width != model.width) {
    throw ConfigError("run: synth block geometry must match the model");
  }
  if (synth.sample_rate != model.mfcc.sample_rate) {
    throw ConfigError("run: synth sample rate must match the cepstral front end");
  }
  if (synth.samples_per_clip < model.min_audio_samples()) {
    throw ConfigError("run: clips of " + std::to_string(synth.samples_per_clip) +
                      " samples are too short for the model (needs " +
                      std::to_string(model.min_audio_samples()) + ")");
  }
}

RunConfig run_config_from_json(const std::string& text, RunConfig base) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config parse: ") + e.what());
  }

  RunConfig cfg = std::move(base);
  bool synth_given = false;
  ordered_json synth_section;
  overlay_object(j, "config", [&](const std::string& key, const ordered_json& v) {
    if (key == "model") overlay_model(v, cfg.model);
    else if (key == "train") overlay_train(v, cfg.train);
    else if (key == "synth") { synth_given = true; synth_section = v; }
    else if (key == "mix") overlay_mix(v, cfg.mix);
    else if (key == "data") overlay_data(v, cfg);
    else if (key == "seed") cfg.seed = v.get<std::uint64_t>();
    else return false;
    return true;
  });

  // Synth geometry follows the (possibly overlaid) model; an explicit synth
  // section then refines knobs or, deliberately, geometry.
  rebase_synth_geometry(cfg);
  if (synth_given) overlay_synth(synth_section, cfg.synth);
  sync_train_modes(cfg);
  cfg.validate();
  return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
  ordered_json j;
  ordered_json& m = j["model"];
  m["frames"] = cfg.model.frames;
  m["channels"] = cfg.model.channels;
  m["height"] = cfg.model.height;
  m["width"] = cfg.model.width;
  m["dim"] = cfg.model.dim;
  m["layers"] = cfg.model.layers;
  m["heads"] = cfg.model.heads;
  m["mlp"] = cfg.model.mlp;
  m["ln_eps"] = cfg.model.ln_eps;
  m["tokenizer"] = to_string(cfg.model.tokenizer);
  m["patch_size"] = cfg.model.patch_size;
  m["fusion"] = to_string(cfg.model.fusion);
  m["weight_mode"] = to_string(cfg.model.weight_mode);
  m["fusion_heads"] = cfg.model.fusion_heads;
  m["frames_per_step"] = cfg.model.frames_per_step;
  m["align"] = to_string(cfg.model.align);
  m["audio_gain"] = cfg.model.audio_gain;
  m["video_gain"] = cfg.model.video_gain;
  ordered_json& mf = m["mfcc"];
  mf["sample_rate"] = cfg.model.mfcc.sample_rate;
  mf["frame_len_s"] = cfg.model.mfcc.frame_len_s;
  mf["frame_shift_s"] = cfg.model.mfcc.frame_shift_s;
  mf["n_coeffs"] = cfg.model.mfcc.n_coeffs;
  mf["n_mels"] = cfg.model.mfcc.n_mels;
  mf["n_fft"] = cfg.model.mfcc.n_fft;
  mf["fmin"] = cfg.model.mfcc.fmin;
  mf["fmax"] = cfg.model.mfcc.fmax;
  mf["log_floor"] = cfg.model.mfcc.log_floor;

  ordered_json& t = j["train"];
  t["lr"] = cfg.train.lr;
  t["epochs"] = cfg.train.epochs;
  t["batch_size"] = cfg.train.batch_size;
  t["seed"] = cfg.train.seed;

  ordered_json& s = j["synth"];
  s["frames"] = cfg.synth.frames;
  s["channels"] = cfg.synth.channels;
  s["height"] = cfg.synth.height;
  s["width"] = cfg.synth.width;
  s["sample_rate"] = cfg.synth.sample_rate;
  s["samples_per_clip"] = cfg.synth.samples_per_clip;
  s["step_seconds"] = cfg.synth.step_seconds;
  s["carrier_hz"] = cfg.synth.carrier_hz;
  s["freq_dev"] = cfg.synth.freq_dev;
  s["am_depth"] = cfg.synth.am_depth;
  s["amplitude"] = cfg.synth.amplitude;
  s["contrast"] = cfg.synth.contrast;
  s["spatial_cycles"] = cfg.synth.spatial_cycles;
  s["n_phases"] = cfg.synth.n_phases;
  s["min_phase_gap"] = cfg.synth.min_phase_gap;
  s["video_noise"] = cfg.synth.video_noise;
  s["audio_noise"] = cfg.synth.audio_noise;

  ordered_json& x = j["mix"];
  x["video_only"] = cfg.mix.video_only;
  x["audio_only"] = cfg.mix.audio_only;
  x["desync"] = cfg.mix.desync;

  ordered_json& d = j["data"];
  d["n_samples"] = cfg.n_samples;
  d["train_frac"] = cfg.train_frac;
  d["val_frac"] = cfg.val_frac;
  d["test_frac"] = cfg.test_frac;

  j["seed"] = cfg.seed;
  return j.dump(2) + "\n";
}

RunConfig read_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return run_config_from_json(text.str(), std::move(base));
}

void write_run_config(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << run_config_to_json(cfg);
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace avdet
