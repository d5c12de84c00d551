#pragma once

#include "xview/error.hpp"
#include "xview/world/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <string>

namespace xview::policy {

enum class Pooling : std::uint8_t { mean, cls };

/// Network dimensions. Keys of the JSON form follow the hyperparameter
/// table of the reference model (image size, hidden dimension, block
/// counts, chunk size) plus the desk-scale extras.
struct ModelConfig {
  int image_size = world::kFrameSize;
  int patch_size = 8;
  int width = 128;
  int heads = 4;
  int view_blocks = 1;
  int mask_blocks = 1;
  int spatial_blocks = 2;
  int temporal_blocks = 2;
  int ffn_mult = 4;
  int mask_ffn_mult = 2;
  int memory = 128;  // M: frames of key/value history
  int turn_bins = world::kTurnBins;
  Pooling pooling = Pooling::mean;
  bool zero_init_heads = true;
  std::uint64_t seed = 0;

  int grid() const { return image_size / patch_size; }
  int tokens() const { return grid() * grid(); }
  int fused_tokens() const { return 2 * tokens() + (pooling == Pooling::cls ? 1 : 0); }

  void validate() const {
    if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0) {
      throw ConfigError("image_size must be a positive multiple of patch_size");
    }
    if (width <= 0 || heads <= 0 || width % heads != 0) throw ConfigError("width must be divisible by heads");
    if (view_blocks < 0 || mask_blocks < 0 || spatial_blocks < 1 || temporal_blocks < 1) {
      throw ConfigError("block counts out of range");
    }
    if (ffn_mult < 1 || mask_ffn_mult < 1) throw ConfigError("ffn multipliers must be >= 1");
    if (memory < 1) throw ConfigError("memory must be >= 1");
    if (turn_bins < 2) throw ConfigError("turn_bins must be >= 2");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Default desk-scale model.
inline ModelConfig desk_config() { return {}; }

/// Reference dimensions (224 px, patch 16, hidden 1024, 4 + 4 blocks).
/// The encoders are shallow stand-ins for the pretrained backbones.
inline ModelConfig paper_config() {
  ModelConfig c;
  c.image_size = 224;
  c.patch_size = 16;
  c.width = 1024;
  c.heads = 16;
  c.view_blocks = 2;
  c.mask_blocks = 1;
  c.spatial_blocks = 4;
  c.temporal_blocks = 4;
  return c;
}

/// Smaller model used by the benchmark and ablation runs.
inline ModelConfig bench_config() {
  ModelConfig c;
  c.width = 64;
  c.heads = 4;
  c.ffn_mult = 2;
  c.mask_ffn_mult = 2;
  return c;
}

/// Tiny double-precision gradient-check model (D = 8, 2 x 2 patch grid).
inline ModelConfig mini_config() {
  ModelConfig c;
  c.image_size = 8;
  c.patch_size = 4;
  c.width = 8;
  c.heads = 2;
  c.view_blocks = 1;
  c.mask_blocks = 1;
  c.spatial_blocks = 1;
  c.temporal_blocks = 2;
  c.ffn_mult = 2;
  c.mask_ffn_mult = 1;
  c.memory = 4;
  c.zero_init_heads = false;
  return c;
}

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"input_image_size", c.image_size},
          {"patch_size", c.patch_size},
          {"hidden_dimension", c.width},
          {"heads", c.heads},
          {"view_blocks", c.view_blocks},
          {"mask_blocks", c.mask_blocks},
          {"number_of_spatial_blocks", c.spatial_blocks},
          {"number_of_temporal_blocks", c.temporal_blocks},
          {"ffn_mult", c.ffn_mult},
          {"mask_ffn_mult", c.mask_ffn_mult},
          {"memory", c.memory},
          {"turn_bins", c.turn_bins},
          {"pooling", c.pooling == Pooling::cls ? "cls" : "mean"},
          {"zero_init_heads", c.zero_init_heads},
          {"seed", c.seed}};
}

/// Missing keys keep their defaults; a "preset" key picks the base.
inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    const std::string preset = j.value("preset", "desk");
    if (preset == "paper") {
      c = paper_config();
    } else if (preset == "bench") {
      c = bench_config();
    } else if (preset == "mini") {
      c = mini_config();
    } else if (preset != "desk") {
      throw ConfigError("unknown model preset: " + preset);
    }
    c.image_size = j.value("input_image_size", c.image_size);
    c.patch_size = j.value("patch_size", c.patch_size);
    c.width = j.value("hidden_dimension", c.width);
    c.heads = j.value("heads", c.heads);
    c.view_blocks = j.value("view_blocks", c.view_blocks);
    c.mask_blocks = j.value("mask_blocks", c.mask_blocks);
    c.spatial_blocks = j.value("number_of_spatial_blocks", c.spatial_blocks);
    c.temporal_blocks = j.value("number_of_temporal_blocks", c.temporal_blocks);
    c.ffn_mult = j.value("ffn_mult", c.ffn_mult);
    c.mask_ffn_mult = j.value("mask_ffn_mult", c.mask_ffn_mult);
    c.memory = j.value("memory", c.memory);
    c.turn_bins = j.value("turn_bins", c.turn_bins);
    const std::string pooling = j.value("pooling", c.pooling == Pooling::cls ? "cls" : "mean");
    if (pooling != "mean" && pooling != "cls") throw ConfigError("pooling must be mean or cls");
    c.pooling = pooling == "cls" ? Pooling::cls : Pooling::mean;
    c.zero_init_heads = j.value("zero_init_heads", c.zero_init_heads);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ModelConfig load_model_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model config: " + path);
  try {
    return model_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("model config parse error: ") + e.what());
  }
}

}  // namespace xview::policy
