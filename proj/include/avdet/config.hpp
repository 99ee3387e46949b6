// SPDX-License-Identifier: Apache-2.0
//
// Whole-run configuration: model, training, synthetic-data, and split
// settings in one JSON document. Loading overlays a document onto defaults,
// rejects unknown keys, and validates cross-field consistency, so a config
// file only needs the fields it changes. The repo ships "desk" and "paper"
// presets.

#pragma once

#include <filesystem>
#include <string>

#include "avdet/synth.hpp"
#include "avdet/train.hpp"

namespace avdet {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SynthConfig synth;  // geometry must agree with model
  ForgeryMix mix;

  Index n_samples = 480;
  Real train_frac = 0.7;
  Real val_frac = 0.1;
  Real test_frac = 0.2;
  std::uint64_t seed = 1;

  RunConfig() : synth(SynthConfig::for_model(model)) {}

  /// T=8 16x16 grayscale blocks, 32-wide encoders. Fits a laptop CPU.
  static RunConfig desk();
  /// T=30 224x224 RGB, 512-wide encoders, 15 ms / 4 ms cepstra.
  static RunConfig paper();

  /// Validates every section plus the joints between them: train modes match
  /// the model's, synth geometry and clip length feed the model exactly.
  void validate() const;
};

RunConfig preset_from(const std::string& name);

/// Overlays a parsed JSON document onto base. Sections and fields may be
/// omitted; unknown keys throw ConfigError. The result is validated.
RunConfig run_config_from_json(const std::string& text, RunConfig base = RunConfig());

/// Full document with every field explicit; read_run_config inverts it.
std::string run_config_to_json(const RunConfig& cfg);

RunConfig read_run_config(const std::filesystem::path& path, RunConfig base = RunConfig());
void write_run_config(const std::filesystem::path& path, const RunConfig& cfg);

}  // namespace avdet
