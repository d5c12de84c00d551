#pragma once

#include "xview/transfer/mapping.hpp"
#include "xview/world/render.hpp"

#include <numbers>

namespace xview::transfer {

/// How a skin reads its control vector. Each source field lives in `slot`
/// scaled by `gain`; signed slots shared by two fields (forward/back) are
/// told apart by sign. Absent fields are not controllable.
struct ControlLayout {
  int size = 0;
  std::vector<MappingRule> fields;

  /// The mapping an agent needs to drive this layout from source actions.
  ActionMapping native_mapping(const std::string& target) const {
    ActionMapping m;
    m.name = target + "_native";
    m.target = target;
    m.target_size = size;
    m.rules = fields;
    for (auto f : kSourceFields) {
      const bool used = std::any_of(fields.begin(), fields.end(), [&](const auto& r) { return r.source == f; });
      if (!used) m.masked.emplace_back(f);
    }
    m.validate();
    return m;
  }

  world::Action decode(const std::vector<double>& v) const {
    if (static_cast<int>(v.size()) != size) {
      throw MappingError("control vector has " + std::to_string(v.size()) + " slots, skin expects " +
                         std::to_string(size));
    }
    // Recover each source field, then take the strongest move and interaction.
    std::array<double, kSourceFields.size()> src{};
    for (const auto& f : fields) {
      const double x = v[static_cast<std::size_t>(f.slot)] / f.gain;
      src[static_cast<std::size_t>(source_index(f.source))] = f.source == "yaw" || f.source == "pitch" ? x : std::max(0.0, x);
    }
    world::Action a;
    auto pick = [&](int first, int count) {
      int best = -1;
      double best_v = 0.5;
      for (int i = 0; i < count; ++i) {
        if (src[static_cast<std::size_t>(first + i)] >= best_v) {
          best_v = src[static_cast<std::size_t>(first + i)];
          best = i;
        }
      }
      return best;
    };
    static constexpr world::MoveCommand moves[] = {world::MoveCommand::forward, world::MoveCommand::back,
                                                   world::MoveCommand::strafe_left, world::MoveCommand::strafe_right};
    static constexpr world::InteractCommand acts[] = {world::InteractCommand::use, world::InteractCommand::break_,
                                                      world::InteractCommand::attack};
    if (const int m = pick(0, 4); m >= 0) a.move = moves[m];
    if (const int i = pick(4, 3); i >= 0) a.interact = acts[i];
    a.turn = std::clamp(src[7], -world::kMaxTurn, world::kMaxTurn);
    return a;
  }
};

/// An alternate look and control scheme over the same simulator.
struct AltEnvSkin {
  std::string name;
  world::RenderOptions render;
  ControlLayout controls;

  void validate() const {
    if (render.width < 32 || render.height < 32) throw ConfigError(name + ": skin resolution must be at least 32x32");
    if (!(render.fov > 0.0 && render.fov < std::numbers::pi)) throw ConfigError(name + ": fov out of range");
    native_mapping();
  }
  ActionMapping native_mapping() const { return controls.native_mapping(name); }
};

inline ControlLayout identity_layout() {
  ControlLayout c;
  c.size = static_cast<int>(kSourceFields.size());
  for (std::size_t i = 0; i < kSourceFields.size(); ++i) c.fields.push_back({std::string(kSourceFields[i]), static_cast<int>(i), 1.0});
  return c;
}

/// Mild shift: warmer palette, 8 degrees wider view, 80x60 frames.
inline AltEnvSkin mild_skin() {
  AltEnvSkin s;
  s.name = "mild";
  s.render.width = 80;
  s.render.height = 60;
  s.render.fov += 8.0 * std::numbers::pi / 180.0;
  s.render.color_matrix = {0.9, 0.1, 0.0, 0.05, 0.85, 0.1, 0.0, 0.1, 0.9};
  s.render.color_offset = {12, 4, -6};
  s.controls = identity_layout();
  return s;
}

/// Hard shift: rotated colour channels, other wall textures, 96x72 frames,
/// and a control vector in degrees with signed movement axes:
/// [yaw_deg, surge, sway, attack, use, break, pitch_deg].
inline AltEnvSkin hard_skin() {
  AltEnvSkin s;
  s.name = "hard";
  s.render.width = 96;
  s.render.height = 72;
  s.render.color_matrix = {0, 1, 0, 0, 0, 1, 1, 0, 0};
  s.render.texture_variant = 1;
  const double deg = 180.0 / std::numbers::pi;
  s.controls.size = 7;
  s.controls.fields = {{"yaw", 0, deg},    {"forward", 1, 1.0}, {"back", 1, -1.0}, {"right", 2, 1.0},
                       {"left", 2, -1.0},  {"attack", 3, 1.0},  {"use", 4, 1.0},   {"break", 5, 1.0},
                       {"pitch", 6, deg}};
  return s;
}

/// Resolution shift alone: the base look at 96x72.
inline AltEnvSkin wide_skin() {
  AltEnvSkin s;
  s.name = "wide";
  s.render.width = 96;
  s.render.height = 72;
  s.controls = identity_layout();
  return s;
}

inline AltEnvSkin skin_by_name(const std::string& name) {
  if (name == "mild") return mild_skin();
  if (name == "hard") return hard_skin();
  if (name == "wide") return wide_skin();
  throw NotFoundError("unknown skin '" + name + "' (expected mild, hard or wide)");
}

}  // namespace xview::transfer
