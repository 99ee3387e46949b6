// SPDX-License-Identifier: Apache-2.0

#include "avdet/video_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

#include <json.hpp>
#include <png.h>

namespace avdet {

namespace {

std::filesystem::path manifest_path(const std::filesystem::path& dir) {
  return dir / "frames.json";
}

/// One decoded frame: interleaved 8-bit samples, gray or RGB.
struct PngFrame {
  Index h = 0, w = 0, c = 0;
  std::vector<std::uint8_t> data;
};

PngFrame read_png(const std::filesystem::path& path, bool want_rgb) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw IoError("cannot decode png: " + path.string() + " (" + image.message + ")");
  }
  image.format = want_rgb ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  PngFrame frame;
  frame.h = static_cast<Index>(image.height);
  frame.w = static_cast<Index>(image.width);
  frame.c = want_rgb ? 3 : 1;
  frame.data.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, frame.data.data(), 0, nullptr)) {
    throw IoError("cannot read png pixels: " + path.string() + " (" + image.message + ")");
  }
  return frame;
}

bool png_is_color(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw IoError("cannot decode png: " + path.string() + " (" + image.message + ")");
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png_image_free(&image);
  return color;
}

}  // namespace

FaceBlock read_face_block_png(const std::filesystem::path& dir) {
  std::ifstream mf(manifest_path(dir));
  if (!mf) throw IoError("missing frame manifest: " + manifest_path(dir).string());
  nlohmann::json meta = nlohmann::json::parse(mf, nullptr, /*allow_exceptions=*/false);
  if (meta.is_discarded() || !meta.contains("frames") || !meta["frames"].is_array() ||
      meta["frames"].empty()) {
    throw IoError("malformed frame manifest: " + manifest_path(dir).string());
  }
  const auto& names = meta["frames"];

  FaceBlock block;
  block.t = static_cast<Index>(names.size());
  const bool rgb = png_is_color(dir / names[0].get<std::string>());
  for (Index t = 0; t < block.t; ++t) {
    const PngFrame frame = read_png(dir / names[t].get<std::string>(), rgb);
    if (t == 0) {
      block.c = frame.c;
      block.h = frame.h;
      block.w = frame.w;
      block.pixels.resize(block.t * block.frame_dim());
    } else if (frame.h != block.h || frame.w != block.w || frame.c != block.c) {
      throw ShapeError("frame " + names[t].get<std::string>() + " is " +
                       std::to_string(frame.w) + "x" + std::to_string(frame.h) +
                       ", block expects " + std::to_string(block.w) + "x" +
                       std::to_string(block.h));
    }
    // Interleaved (y, x, c) bytes to planar (c, y, x) unit floats.
    for (Index y = 0; y < block.h; ++y) {
      for (Index x = 0; x < block.w; ++x) {
        for (Index c = 0; c < block.c; ++c) {
          block.pixels[((t * block.c + c) * block.h + y) * block.w + x] =
              static_cast<Real>(frame.data[(y * block.w + x) * block.c + c]) / 255.0;
        }
      }
    }
  }
  block.validate();
  return block;
}

void write_face_block_png(const std::filesystem::path& dir, const FaceBlock& block) {
  block.validate();
  if (block.c != 1 && block.c != 3) {
    throw ConfigError("png frames support 1 or 3 channels, got " + std::to_string(block.c));
  }
  std::filesystem::create_directories(dir);
  nlohmann::json names = nlohmann::json::array();
  std::vector<std::uint8_t> buf(block.h * block.w * block.c);
  for (Index t = 0; t < block.t; ++t) {
    for (Index y = 0; y < block.h; ++y) {
      for (Index x = 0; x < block.w; ++x) {
        for (Index c = 0; c < block.c; ++c) {
          const Real v =
              std::clamp(block.pixels[((t * block.c + c) * block.h + y) * block.w + x],
                         Real(0), Real(1));
          buf[(y * block.w + x) * block.c + c] =
              static_cast<std::uint8_t>(std::lrint(v * 255.0));
        }
      }
    }
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04d.png", static_cast<int>(t));
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(block.w);
    image.height = static_cast<png_uint_32>(block.h);
    image.format = block.c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, (dir / name).string().c_str(), 0, buf.data(), 0,
                                 nullptr)) {
      throw IoError("cannot write png: " + (dir / name).string() + " (" + image.message + ")");
    }
    names.push_back(name);
  }
  nlohmann::json meta;
  meta["frames"] = std::move(names);
  std::ofstream mf(manifest_path(dir), std::ios::trunc);
  mf << meta.dump() << "\n";
  if (!mf) throw IoError("cannot write frame manifest: " + manifest_path(dir).string());
}

FaceBlock read_face_block_packed(const std::filesystem::path& path) {
  std::ifstream side(path.string() + ".json");
  if (!side) throw IoError("missing face block sidecar: " + path.string() + ".json");
  nlohmann::json meta = nlohmann::json::parse(side, nullptr, /*allow_exceptions=*/false);
  for (const char* key : {"t", "c", "h", "w"}) {
    if (meta.is_discarded() || !meta.contains(key)) {
      throw IoError("malformed face block sidecar: " + path.string() + ".json");
    }
  }
  FaceBlock block;
  block.t = meta["t"].get<Index>();
  block.c = meta["c"].get<Index>();
  block.h = meta["h"].get<Index>();
  block.w = meta["w"].get<Index>();
  if (block.t < 1 || block.c < 1 || block.h < 1 || block.w < 1) {
    throw IoError("invalid face block dimensions in sidecar: " + path.string());
  }

  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open face block: " + path.string());
  std::vector<float> raw(static_cast<std::size_t>(block.t * block.frame_dim()));
  f.read(reinterpret_cast<char*>(raw.data()),
         static_cast<std::streamsize>(raw.size() * sizeof(float)));
  if (!f) throw IoError("truncated face block: " + path.string());
  block.pixels.resize(static_cast<Index>(raw.size()));
  for (std::size_t i = 0; i < raw.size(); ++i) {
    block.pixels[static_cast<Index>(i)] = static_cast<Real>(raw[i]);
  }
  block.validate();
  return block;
}

void write_face_block_packed(const std::filesystem::path& path, const FaceBlock& block) {
  block.validate();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open face block for writing: " + path.string());
  std::vector<float> raw(static_cast<std::size_t>(block.pixels.size()));
  for (Index i = 0; i < block.pixels.size(); ++i) {
    raw[static_cast<std::size_t>(i)] = static_cast<float>(block.pixels[i]);
  }
  f.write(reinterpret_cast<const char*>(raw.data()),
          static_cast<std::streamsize>(raw.size() * sizeof(float)));
  if (!f) throw IoError("failed writing face block: " + path.string());

  nlohmann::json meta;
  meta["t"] = block.t;
  meta["c"] = block.c;
  meta["h"] = block.h;
  meta["w"] = block.w;
  std::ofstream side(path.string() + ".json", std::ios::trunc);
  side << meta.dump() << "\n";
  if (!side) throw IoError("failed writing face block sidecar: " + path.string() + ".json");
}

}  // namespace avdet
