// SPDX-License-Identifier: Apache-2.0
//
// Parameter checkpoints: a JSON header describing an ordered list of named
// arrays (name, shape, byte offset) followed by the raw little-endian 64-bit
// float payload. Round-trips are bit-exact.

#pragma once

#include <filesystem>

#include "avdet/nn.hpp"

namespace avdet {

void save_checkpoint(const std::filesystem::path& path, const ParamList& params);

/// Reads a checkpoint into fresh leaf tensors (requires_grad set).
ParamList load_checkpoint(const std::filesystem::path& path);

/// Copies a checkpoint's values into an existing parameter list. Names must
/// match one-to-one in order, shapes must agree.
void load_checkpoint_into(const std::filesystem::path& path, ParamList& params);

}  // namespace avdet
