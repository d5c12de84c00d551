#pragma once

// Checkpoint layout (little-endian):
//
//   "XVCK"  u32 version
//   u32 n  <n bytes: model config JSON>
//   u32 n  <n bytes: free-form metadata JSON>
//   u32 parameter_count
//   per parameter: u32 n <name>  u32 rows  u32 cols  <rows * cols f32, row-major>

#include "xview/binary_io.hpp"
#include "xview/image.hpp"
#include "xview/policy/model.hpp"

#include <memory>
#include <string>

namespace xview::policy {

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
std::vector<std::uint8_t> serialize_checkpoint(const Policy<T>& model, const nlohmann::json& metadata = {}) {
  io::ByteWriter out;
  out.put_bytes("XVCK", 4);
  out.put(kCheckpointVersion);
  out.put_string(to_json(model.config()).dump());
  out.put_string(metadata.is_null() ? "{}" : metadata.dump());
  const auto& entries = model.parameters().entries();
  out.put(static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, var] : entries) {
    out.put_string(name);
    out.put(static_cast<std::uint32_t>(var.rows()));
    out.put(static_cast<std::uint32_t>(var.cols()));
    for (Index i = 0; i < var.value().size(); ++i) out.put(static_cast<float>(var.value().data()[i]));
  }
  return std::move(out.bytes());
}

template <typename T>
void save_checkpoint(const Policy<T>& model, const std::string& path, const nlohmann::json& metadata = {}) {
  write_file(path, serialize_checkpoint(model, metadata));
}

template <typename T>
struct LoadedCheckpoint {
  std::unique_ptr<Policy<T>> model;
  nlohmann::json metadata;
};

template <typename T>
LoadedCheckpoint<T> deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  io::ByteReader<CorruptShardError> in(bytes.data(), bytes.size());
  char magic[4];
  try {
    in.get_bytes(magic, 4);
    if (std::string(magic, 4) != "XVCK") throw UnsupportedFormatError("not a checkpoint file");
    const auto version = in.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
      throw UnsupportedFormatError("checkpoint version " + std::to_string(version) + " is not supported");
    }
    LoadedCheckpoint<T> out;
    const auto config = model_config_from_json(nlohmann::json::parse(in.get_string()));
    out.metadata = nlohmann::json::parse(in.get_string());
    out.model = std::make_unique<Policy<T>>(config);
    auto& entries = out.model->parameters().entries();
    const auto count = in.get<std::uint32_t>();
    if (count != entries.size()) throw ConfigError("checkpoint parameter count does not match its config");
    for (auto& [name, var] : entries) {
      const auto stored = in.get_string();
      const auto rows = in.get<std::uint32_t>();
      const auto cols = in.get<std::uint32_t>();
      if (stored != name || rows != var.rows() || cols != var.cols()) {
        throw ConfigError("checkpoint parameter " + stored + " does not match " + name);
      }
      auto& w = var.mutable_value();
      for (Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(in.get<float>());
    }
    if (in.remaining() != 0) throw IoError("trailing bytes in checkpoint");
    return out;
  } catch (const CorruptShardError& e) {
    throw IoError(std::string("truncated checkpoint: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint header: ") + e.what());
  }
}

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
  return deserialize_checkpoint<T>(read_file(path));
}

}  // namespace xview::policy
