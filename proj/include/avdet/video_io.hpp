// SPDX-License-Identifier: Apache-2.0
//
// Face block storage: a directory of per-frame PNGs listed by an ordering
// manifest ("frames.json": {"frames": [...]}) for real data, or a packed
// little-endian float32 file with a JSON sidecar for synthetic data.

#pragma once

#include <filesystem>

#include "avdet/encoder.hpp"

namespace avdet {

/// Reads the manifest, then each listed PNG in order. All frames must share
/// one resolution and channel count (grayscale or RGB); pixels land in [0, 1].
FaceBlock read_face_block_png(const std::filesystem::path& dir);

/// Writes frames as 8-bit PNGs (grayscale for c==1, RGB for c==3) plus the
/// ordering manifest.
void write_face_block_png(const std::filesystem::path& dir, const FaceBlock& block);

FaceBlock read_face_block_packed(const std::filesystem::path& path);
void write_face_block_packed(const std::filesystem::path& path, const FaceBlock& block);

}  // namespace avdet
