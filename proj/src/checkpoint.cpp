// SPDX-License-Identifier: Apache-2.0

#include "avdet/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace avdet {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian; big-endian hosts need byte swaps");

namespace {

constexpr char kMagic[8] = {'A', 'V', 'D', 'T', 'C', 'K', 'P', '1'};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamList& params) {
  nlohmann::json header;
  header["params"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const NamedParam& p : params) {
    nlohmann::json entry;
    entry["name"] = p.name;
    entry["shape"] = p.tensor.shape();
    entry["offset"] = offset;
    header["params"].push_back(std::move(entry));
    offset += static_cast<std::uint64_t>(p.tensor.numel()) * sizeof(Real);
  }
  header["payload_bytes"] = offset;
  const std::string head = header.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path.string());
  f.write(kMagic, sizeof(kMagic));
  const std::uint64_t head_len = head.size();
  f.write(reinterpret_cast<const char*>(&head_len), sizeof(head_len));
  f.write(head.data(), static_cast<std::streamsize>(head.size()));
  for (const NamedParam& p : params) {
    f.write(reinterpret_cast<const char*>(p.tensor.flat().data()),
            static_cast<std::streamsize>(p.tensor.numel() * sizeof(Real)));
  }
  if (!f) throw IoError("failed writing checkpoint: " + path.string());
}

namespace {

struct RawCheckpoint {
  nlohmann::json header;
  std::vector<char> payload;
};

RawCheckpoint read_raw(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path.string());
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || !std::equal(magic, magic + 8, kMagic)) {
    throw IoError("not a checkpoint file: " + path.string());
  }
  std::uint64_t head_len = 0;
  f.read(reinterpret_cast<char*>(&head_len), sizeof(head_len));
  std::string head(head_len, '\0');
  f.read(head.data(), static_cast<std::streamsize>(head_len));
  if (!f) throw IoError("truncated checkpoint header: " + path.string());

  RawCheckpoint raw;
  raw.header = nlohmann::json::parse(head, nullptr, /*allow_exceptions=*/false);
  if (raw.header.is_discarded()) throw IoError("malformed checkpoint header: " + path.string());
  const std::uint64_t payload_bytes = raw.header.at("payload_bytes").get<std::uint64_t>();
  raw.payload.resize(payload_bytes);
  f.read(raw.payload.data(), static_cast<std::streamsize>(payload_bytes));
  if (!f) throw IoError("truncated checkpoint payload: " + path.string());
  return raw;
}

Vec payload_slice(const RawCheckpoint& raw, std::uint64_t offset, Index numel) {
  const std::uint64_t bytes = static_cast<std::uint64_t>(numel) * sizeof(Real);
  if (offset + bytes > raw.payload.size()) throw IoError("checkpoint offset outside payload");
  Vec v(numel);
  std::memcpy(v.data(), raw.payload.data() + offset, bytes);
  return v;
}

}  // namespace

ParamList load_checkpoint(const std::filesystem::path& path) {
  const RawCheckpoint raw = read_raw(path);
  ParamList params;
  for (const auto& entry : raw.header.at("params")) {
    const std::string name = entry.at("name").get<std::string>();
    const Shape shape = entry.at("shape").get<Shape>();
    const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
    Vec v = payload_slice(raw, offset, shape_numel(shape));
    params.push_back({name, Tensor::from_flat(shape, std::move(v), /*requires_grad=*/true)});
  }
  return params;
}

void load_checkpoint_into(const std::filesystem::path& path, ParamList& params) {
  const RawCheckpoint raw = read_raw(path);
  const auto& entries = raw.header.at("params");
  if (entries.size() != params.size()) {
    throw IoError("checkpoint holds " + std::to_string(entries.size()) + " arrays, model has " +
                  std::to_string(params.size()));
  }
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& entry = entries[i];
    const std::string name = entry.at("name").get<std::string>();
    const Shape shape = entry.at("shape").get<Shape>();
    if (name != params[i].name) {
      throw IoError("checkpoint array '" + name + "' does not match parameter '" +
                    params[i].name + "'");
    }
    if (shape != params[i].tensor.shape()) {
      throw IoError("checkpoint shape " + shape_str(shape) + " does not match parameter '" +
                    name + "' of shape " + shape_str(params[i].tensor.shape()));
    }
    params[i].tensor.leaf_values() =
        payload_slice(raw, entry.at("offset").get<std::uint64_t>(), shape_numel(shape));
  }
}

}  // namespace avdet
