// SPDX-License-Identifier: Apache-2.0
//
// Audio file formats: 16-bit PCM mono WAV, and a raw little-endian float32
// stream with a one-line JSON sidecar ("<path>.json" holding sample_rate and
// length) for synthetic data.

#pragma once

#include <filesystem>

#include "avdet/audio.hpp"

namespace avdet {

AudioClip read_wav(const std::filesystem::path& path);

/// Samples are clamped to [-1, 1] and quantized to 16-bit PCM.
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

AudioClip read_raw_audio(const std::filesystem::path& path);
void write_raw_audio(const std::filesystem::path& path, const AudioClip& clip);

}  // namespace avdet
