#pragma once

#include "xview/image.hpp"
#include "xview/world/types.hpp"

#include <string>

namespace xview::world {

inline Image rgb_image(const Observation& obs) {
  Image img(obs.height, obs.width, 3);
  img.data = obs.rgb;
  return img;
}

/// Deterministic false-colour rendering of an instance buffer; background
/// is black.
inline Image colorize_instances(const Observation& obs) {
  Image img(obs.height, obs.width, 3);
  for (std::size_t i = 0; i < obs.instance_buffer.size(); ++i) {
    const std::uint32_t id = obs.instance_buffer[i];
    if (id == 0) continue;
    std::uint32_t h = id * 2654435761u;
    img.data[i * 3 + 0] = static_cast<std::uint8_t>(64 + (h & 0x7F));
    img.data[i * 3 + 1] = static_cast<std::uint8_t>(64 + ((h >> 8) & 0x7F));
    img.data[i * 3 + 2] = static_cast<std::uint8_t>(64 + ((h >> 16) & 0x7F));
  }
  return img;
}

/// Writes `<stem>_rgb.png` and `<stem>_ids.png`.
inline void export_observation(const Observation& obs, const std::string& stem) {
  write_png(stem + "_rgb.png", rgb_image(obs));
  write_png(stem + "_ids.png", colorize_instances(obs));
}

}  // namespace xview::world
