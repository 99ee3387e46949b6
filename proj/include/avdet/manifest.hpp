// SPDX-License-Identifier: Apache-2.0
//
// Dataset manifests: a JSON Lines index of samples on disk, each entry
// naming the video and audio files, the label, and the split it belongs to.
// One sample is one directory holding either media files (a frames/ PNG dir
// plus audio.wav) or packed floats (face.bin plus audio.f32), and a
// label.json. Manifests are built by scanning such a tree, rebalanced by
// class, and serialized byte-stably.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "avdet/synth.hpp"

namespace avdet {

enum class Split { train, val, test };

const char* to_string(Split s);
Split split_from(const std::string& s);

struct ManifestEntry {
  std::string id;     // unique within a manifest
  std::string video;  // frames dir or packed file, relative to the manifest
  std::string audio;  // wav or raw float file, relative to the manifest
  int label = 0;      // 1 = fake
  // Break-type annotation: none for real samples and for fakes whose kind is
  // not recorded. Only annotated fakes land in per-type metric subsets.
  ForgeryType forgery = ForgeryType::none;
  Split split = Split::train;
};

struct SplitCounts {
  Index real = 0;
  Index fake = 0;

  Index total() const { return real + fake; }
};

struct SampleManifest {
  std::vector<ManifestEntry> entries;

  SplitCounts counts() const;             // whole manifest
  SplitCounts counts(Split split) const;  // one split

  /// Unique ids, labels in {0, 1}.
  void validate() const;
};

/// One entry per line, fixed key order, so read-write round trips are
/// byte-identical.
void write_manifest_jsonl(const std::filesystem::path& path, const SampleManifest& manifest);
SampleManifest read_manifest_jsonl(const std::filesystem::path& path);

struct SplitRatio {
  Real train = 0.7;
  Real val = 0.1;
  Real test = 0.2;
};

struct ManifestBuildReport {
  SampleManifest manifest;
  // One "<dir>: <reason>" line per sample directory that could not be
  // indexed. Rejects are reported, never silently dropped.
  std::vector<std::string> rejects;
};

/// Scans the immediate subdirectories of root (sorted by name), indexes every
/// readable sample, then assigns splits by a seeded shuffle and largest
/// remainder at the given ratio. Entry paths come out relative to root.
/// Throws EmptyInputError when no sample survives.
ManifestBuildReport build_manifest(const std::filesystem::path& root, SplitRatio ratio,
                                   std::uint64_t seed);

enum class BalanceStrategy { subsample, oversample };

const char* to_string(BalanceStrategy s);
BalanceStrategy balance_strategy_from(const std::string& s);

struct BalanceReport {
  SampleManifest manifest;
  SplitCounts before;
  SplitCounts after;
};

/// Moves the real:fake count ratio to target_real:target_fake, either
/// dropping a seeded random subset of the over-represented class or
/// duplicating random members of the other one (copies get "@k" id suffixes
/// to keep ids unique). The adjusted count is round(kept * target/other), so
/// the result is within one sample of the target ratio; an input already
/// there comes back unchanged. Split assignments are never touched. Throws
/// BalanceError when either class is absent.
BalanceReport balance(const SampleManifest& manifest, Real target_real, Real target_fake,
                      BalanceStrategy strategy, std::uint64_t seed);

/// Two-row comparison of class proportions before and after balancing.
std::string format_balance_table(const BalanceReport& report);

/// Indexes one sample directory (id = directory name, paths relative to its
/// parent). Throws IoError naming whatever makes the directory unreadable.
ManifestEntry index_sample_dir(const std::filesystem::path& dir);

struct LoadedSample {
  FaceBlock face;
  AudioClip audio;
  int label = 0;
  ForgeryType forgery = ForgeryType::none;
};

/// Reads the media an entry points at; base is the manifest's directory.
/// Video paths ending in ".bin" read as packed floats, others as PNG frame
/// dirs; audio ".wav" reads as PCM, anything else as raw floats.
LoadedSample load_sample(const ManifestEntry& entry, const std::filesystem::path& base);

enum class MediaFormat { media, packed };

const char* to_string(MediaFormat f);
MediaFormat media_format_from(const std::string& s);

/// Writes one sample directory in the layout build_manifest scans: media
/// writes frames/ PNGs + audio.wav (8- and 16-bit quantized), packed writes
/// bit-exact float32 face.bin + audio.f32. label.json records label and
/// forgery either way.
void write_sample_dir(const std::filesystem::path& dir, const SyntheticSample& sample,
                      MediaFormat format);

}  // namespace avdet
