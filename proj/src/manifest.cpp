// SPDX-License-Identifier: Apache-2.0

#include "avdet/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "avdet/audio_io.hpp"
#include "avdet/train.hpp"
#include "avdet/video_io.hpp"

namespace avdet {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    default: return "test";
  }
}

Split split_from(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split '" + s + "'");
}

const char* to_string(BalanceStrategy s) {
  return s == BalanceStrategy::subsample ? "subsample" : "oversample";
}

BalanceStrategy balance_strategy_from(const std::string& s) {
  if (s == "subsample") return BalanceStrategy::subsample;
  if (s == "oversample") return BalanceStrategy::oversample;
  throw ConfigError("unknown balance strategy '" + s + "'");
}

const char* to_string(MediaFormat f) { return f == MediaFormat::media ? "media" : "packed"; }

MediaFormat media_format_from(const std::string& s) {
  if (s == "media") return MediaFormat::media;
  if (s == "packed") return MediaFormat::packed;
  throw ConfigError("unknown media format '" + s + "'");
}

SplitCounts SampleManifest::counts() const {
  SplitCounts c;
  for (const ManifestEntry& e : entries) ++(e.label ? c.fake : c.real);
  return c;
}

SplitCounts SampleManifest::counts(Split split) const {
  SplitCounts c;
  for (const ManifestEntry& e : entries) {
    if (e.split == split) ++(e.label ? c.fake : c.real);
  }
  return c;
}

void SampleManifest::validate() const {
  std::vector<std::string> ids;
  ids.reserve(entries.size());
  for (const ManifestEntry& e : entries) {
    if (e.id.empty()) throw ConfigError("manifest entry with empty id");
    if (e.label != 0 && e.label != 1) {
      throw ConfigError("manifest entry '" + e.id + "' label must be 0 or 1");
    }
    ids.push_back(e.id);
  }
  std::sort(ids.begin(), ids.end());
  const auto dup = std::adjacent_find(ids.begin(), ids.end());
  if (dup != ids.end()) throw ConfigError("duplicate manifest id '" + *dup + "'");
}

void write_manifest_jsonl(const fs::path& path, const SampleManifest& manifest) {
  manifest.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const ManifestEntry& e : manifest.entries) {
    ordered_json j;
    j["id"] = e.id;
    j["video"] = e.video;
    j["audio"] = e.audio;
    j["label"] = e.label;
    j["forgery"] = to_string(e.forgery);
    j["split"] = to_string(e.split);
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("short write to " + path.string());
}

SampleManifest read_manifest_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  SampleManifest manifest;
  std::string line;
  Index line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    try {
      ManifestEntry entry;
      entry.id = j.at("id").get<std::string>();
      entry.video = j.at("video").get<std::string>();
      entry.audio = j.at("audio").get<std::string>();
      entry.label = j.at("label").get<int>();
      entry.forgery = forgery_type_from(j.at("forgery").get<std::string>());
      entry.split = split_from(j.at("split").get<std::string>());
      for (const auto& item : j.items()) {
        static const char* known[] = {"id", "video", "audio", "label", "forgery", "split"};
        if (std::find_if(std::begin(known), std::end(known),
                         [&](const char* k) { return item.key() == k; }) == std::end(known)) {
          throw ConfigError("unknown manifest key '" + item.key() + "'");
        }
      }
      manifest.entries.push_back(std::move(entry));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  manifest.validate();
  return manifest;
}

ManifestEntry index_sample_dir(const fs::path& dir) {
  ManifestEntry entry;
  entry.id = dir.filename().string();

  if (fs::is_directory(dir / "frames") && fs::is_regular_file(dir / "frames" / "frames.json")) {
    entry.video = entry.id + "/frames";
  } else if (fs::is_regular_file(dir / "face.bin")) {
    entry.video = entry.id + "/face.bin";
  } else {
    throw IoError("no frames/ directory or face.bin");
  }

  if (fs::is_regular_file(dir / "audio.wav")) {
    entry.audio = entry.id + "/audio.wav";
  } else if (fs::is_regular_file(dir / "audio.f32")) {
    entry.audio = entry.id + "/audio.f32";
  } else {
    throw IoError("no audio.wav or audio.f32");
  }

  std::ifstream in(dir / "label.json");
  if (!in) throw IoError("no label.json");
  ordered_json j;
  try {
    j = ordered_json::parse(in);
    entry.label = j.at("label").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("label.json: ") + e.what());
  }
  if (entry.label != 0 && entry.label != 1) throw IoError("label must be 0 or 1");
  if (j.contains("forgery")) {
    entry.forgery = forgery_type_from(j["forgery"].get<std::string>());
  }
  return entry;
}

ManifestBuildReport build_manifest(const fs::path& root, SplitRatio ratio, std::uint64_t seed) {
  if (!fs::is_directory(root)) throw IoError("not a directory: " + root.string());

  std::vector<fs::path> dirs;
  for (const auto& item : fs::directory_iterator(root)) {
    if (item.is_directory()) dirs.push_back(item.path());
  }
  std::sort(dirs.begin(), dirs.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });

  ManifestBuildReport report;
  for (const fs::path& dir : dirs) {
    try {
      report.manifest.entries.push_back(index_sample_dir(dir));
    } catch (const std::runtime_error& e) {
      report.rejects.push_back(dir.filename().string() + ": " + e.what());
    }
  }
  if (report.manifest.entries.empty()) {
    throw EmptyInputError("no readable samples under " + root.string() + " (" +
                          std::to_string(report.rejects.size()) + " rejected)");
  }

  std::vector<ManifestEntry>& entries = report.manifest.entries;
  const std::vector<Index> counts = largest_remainder_counts(
      static_cast<Index>(entries.size()), {ratio.train, ratio.val, ratio.test});
  Rng rng(seed);
  rng.shuffle(entries);
  Index at = 0;
  const Split order[3] = {Split::train, Split::val, Split::test};
  for (int k = 0; k < 3; ++k) {
    for (Index i = 0; i < counts[k]; ++i) entries[at++].split = order[k];
  }
  std::sort(entries.begin(), entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.id < b.id; });
  report.manifest.validate();
  return report;
}

BalanceReport balance(const SampleManifest& manifest, Real target_real, Real target_fake,
                      BalanceStrategy strategy, std::uint64_t seed) {
  if (!(target_real > 0) || !(target_fake > 0) || !std::isfinite(target_real) ||
      !std::isfinite(target_fake)) {
    throw ConfigError("balance targets must be finite and positive");
  }
  manifest.validate();

  BalanceReport report;
  report.manifest = manifest;
  report.before = manifest.counts();
  const Real r = static_cast<Real>(report.before.real);
  const Real f = static_cast<Real>(report.before.fake);
  if (report.before.real == 0 || report.before.fake == 0) {
    throw BalanceError("both classes must be present (have " + std::to_string(report.before.real) +
                       " real, " + std::to_string(report.before.fake) + " fake)");
  }

  // Cross-multiplied comparison of r:f against target_real:target_fake.
  const bool real_heavy = r * target_fake > f * target_real;
  const bool fake_heavy = r * target_fake < f * target_real;
  if (real_heavy || fake_heavy) {
    const int heavy_label = real_heavy ? 0 : 1;
    const Real heavy_target = real_heavy ? target_real : target_fake;
    const Real light_target = real_heavy ? target_fake : target_real;
    const Real heavy_count = real_heavy ? r : f;
    const Real light_count = real_heavy ? f : r;

    std::vector<ManifestEntry>& entries = report.manifest.entries;
    Rng rng(seed);
    if (strategy == BalanceStrategy::subsample) {
      // Shrink the heavy class to match the light one at the target ratio.
      const Index target = std::max<Index>(
          1, static_cast<Index>(std::llround(light_count * heavy_target / light_target)));
      if (target < static_cast<Index>(heavy_count)) {
        std::vector<size_t> heavy_idx;
        for (size_t i = 0; i < entries.size(); ++i) {
          if (entries[i].label == heavy_label) heavy_idx.push_back(i);
        }
        rng.shuffle(heavy_idx);
        heavy_idx.resize(heavy_idx.size() - static_cast<size_t>(target));  // the drops
        std::sort(heavy_idx.begin(), heavy_idx.end(), std::greater<>());
        for (size_t idx : heavy_idx) {
          entries.erase(entries.begin() + static_cast<std::ptrdiff_t>(idx));
        }
      }
    } else {
      // Grow the light class with replacement to match the heavy one.
      const Index target =
          static_cast<Index>(std::llround(heavy_count * light_target / heavy_target));
      std::vector<size_t> light_idx;
      for (size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].label != heavy_label) light_idx.push_back(i);
      }
      Index copy_no = 0;
      for (Index have = static_cast<Index>(light_count); have < target; ++have) {
        const size_t pick =
            light_idx[static_cast<size_t>(rng.below(static_cast<std::uint64_t>(light_idx.size())))];
        ManifestEntry copy = entries[pick];
        copy.id += "@" + std::to_string(++copy_no);
        entries.push_back(std::move(copy));
      }
    }
  }

  report.after = report.manifest.counts();
  report.manifest.validate();
  return report;
}

std::string format_balance_table(const BalanceReport& report) {
  const auto line = [](const char* name, const SplitCounts& c) {
    std::ostringstream os;
    const Real total = static_cast<Real>(std::max<Index>(1, c.total()));
    os << std::left << std::setw(8) << name << std::right << std::setw(7) << c.real << " real ("
       << std::fixed << std::setprecision(1) << 100.0 * static_cast<Real>(c.real) / total << "%)"
       << std::setw(7) << c.fake << " fake ("
       << 100.0 * static_cast<Real>(c.fake) / total << "%)";
    return os.str();
  };
  std::ostringstream os;
  os << line("before", report.before) << "\n" << line("after", report.after) << "\n";
  return os.str();
}

LoadedSample load_sample(const ManifestEntry& entry, const fs::path& base) {
  LoadedSample sample;
  const fs::path video = base / entry.video;
  sample.face = video.extension() == ".bin" ? read_face_block_packed(video)
                                            : read_face_block_png(video);
  const fs::path audio = base / entry.audio;
  sample.audio = audio.extension() == ".wav" ? read_wav(audio) : read_raw_audio(audio);
  sample.label = entry.label;
  sample.forgery = entry.forgery;
  return sample;
}

void write_sample_dir(const fs::path& dir, const SyntheticSample& sample, MediaFormat format) {
  fs::create_directories(dir);
  if (format == MediaFormat::media) {
    write_face_block_png(dir / "frames", sample.face);
    write_wav(dir / "audio.wav", sample.audio);
  } else {
    write_face_block_packed(dir / "face.bin", sample.face);
    write_raw_audio(dir / "audio.f32", sample.audio);
  }
  ordered_json j;
  j["label"] = sample.label;
  j["forgery"] = to_string(sample.forgery);
  std::ofstream out(dir / "label.json");
  if (!out) throw IoError("cannot write " + (dir / "label.json").string());
  out << j.dump() << "\n";
}

}  // namespace avdet
