// SPDX-License-Identifier: Apache-2.0

#include "avdet/audio_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace avdet {

static_assert(std::endian::native == std::endian::little,
              "WAV and raw payloads are little-endian; big-endian hosts need byte swaps");

namespace {

template <typename T>
T read_le(std::istream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

template <typename T>
void write_le(std::ostream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

}  // namespace

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open wav: " + path.string());
  char tag[4];
  f.read(tag, 4);
  if (!f || std::memcmp(tag, "RIFF", 4) != 0) throw IoError("not a RIFF file: " + path.string());
  (void)read_le<std::uint32_t>(f);
  f.read(tag, 4);
  if (!f || std::memcmp(tag, "WAVE", 4) != 0) throw IoError("not a WAVE file: " + path.string());

  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool has_fmt = false;
  while (f.read(tag, 4)) {
    const std::uint32_t chunk = read_le<std::uint32_t>(f);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      const std::uint16_t format = read_le<std::uint16_t>(f);
      channels = read_le<std::uint16_t>(f);
      rate = read_le<std::uint32_t>(f);
      (void)read_le<std::uint32_t>(f);  // byte rate
      (void)read_le<std::uint16_t>(f);  // block align
      bits = read_le<std::uint16_t>(f);
      if (chunk > 16) f.seekg(chunk - 16, std::ios::cur);
      if (format != 1) throw IoError("wav is not integer PCM: " + path.string());
      has_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!has_fmt) throw IoError("wav data chunk precedes fmt: " + path.string());
      if (channels != 1 || bits != 16) {
        throw IoError("expected 16-bit mono wav: " + path.string());
      }
      const std::size_t n = chunk / 2;
      std::vector<std::int16_t> pcm(n);
      f.read(reinterpret_cast<char*>(pcm.data()), static_cast<std::streamsize>(chunk));
      if (!f) throw IoError("truncated wav data: " + path.string());
      AudioClip clip;
      clip.sample_rate = static_cast<Index>(rate);
      clip.samples.resize(static_cast<Index>(n));
      for (std::size_t i = 0; i < n; ++i) {
        clip.samples[static_cast<Index>(i)] =
            std::clamp(static_cast<Real>(pcm[i]) / 32767.0, Real(-1), Real(1));
      }
      return clip;
    } else {
      f.seekg(chunk + (chunk & 1), std::ios::cur);  // chunks are word-aligned
    }
  }
  throw IoError("wav has no data chunk: " + path.string());
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  if (clip.sample_rate <= 0) throw ConfigError("wav sample rate must be positive");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open wav for writing: " + path.string());
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  f.write("RIFF", 4);
  write_le<std::uint32_t>(f, 36 + data_bytes);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  write_le<std::uint32_t>(f, 16);
  write_le<std::uint16_t>(f, 1);  // integer PCM
  write_le<std::uint16_t>(f, 1);  // mono
  write_le<std::uint32_t>(f, static_cast<std::uint32_t>(clip.sample_rate));
  write_le<std::uint32_t>(f, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  write_le<std::uint16_t>(f, 2);
  write_le<std::uint16_t>(f, 16);
  f.write("data", 4);
  write_le<std::uint32_t>(f, data_bytes);
  for (Index i = 0; i < clip.samples.size(); ++i) {
    const Real clamped = std::clamp(clip.samples[i], Real(-1), Real(1));
    write_le<std::int16_t>(f, static_cast<std::int16_t>(std::lrint(clamped * 32767.0)));
  }
  if (!f) throw IoError("failed writing wav: " + path.string());
}

namespace {

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

}  // namespace

AudioClip read_raw_audio(const std::filesystem::path& path) {
  std::ifstream side(sidecar_path(path));
  if (!side) throw IoError("missing audio sidecar: " + sidecar_path(path).string());
  nlohmann::json meta = nlohmann::json::parse(side, nullptr, /*allow_exceptions=*/false);
  if (meta.is_discarded() || !meta.contains("sample_rate") || !meta.contains("length")) {
    throw IoError("malformed audio sidecar: " + sidecar_path(path).string());
  }
  const Index rate = meta["sample_rate"].get<Index>();
  const Index length = meta["length"].get<Index>();
  if (rate <= 0 || length <= 0) throw IoError("invalid sidecar fields: " + path.string());

  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open raw audio: " + path.string());
  std::vector<float> raw(static_cast<std::size_t>(length));
  f.read(reinterpret_cast<char*>(raw.data()),
         static_cast<std::streamsize>(raw.size() * sizeof(float)));
  if (!f) throw IoError("truncated raw audio: " + path.string());

  AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.resize(length);
  for (Index i = 0; i < length; ++i) clip.samples[i] = static_cast<Real>(raw[i]);
  return clip;
}

void write_raw_audio(const std::filesystem::path& path, const AudioClip& clip) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open raw audio for writing: " + path.string());
  std::vector<float> raw(static_cast<std::size_t>(clip.samples.size()));
  for (Index i = 0; i < clip.samples.size(); ++i) raw[static_cast<std::size_t>(i)] =
      static_cast<float>(clip.samples[i]);
  f.write(reinterpret_cast<const char*>(raw.data()),
          static_cast<std::streamsize>(raw.size() * sizeof(float)));
  if (!f) throw IoError("failed writing raw audio: " + path.string());

  nlohmann::json meta;
  meta["sample_rate"] = clip.sample_rate;
  meta["length"] = clip.samples.size();
  std::ofstream side(sidecar_path(path), std::ios::trunc);
  side << meta.dump() << "\n";
  if (!side) throw IoError("failed writing audio sidecar: " + sidecar_path(path).string());
}

}  // namespace avdet
