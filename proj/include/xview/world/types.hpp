#pragma once

#include "xview/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

namespace xview::world {

inline constexpr int kFrameSize = 64;
inline constexpr double kMaxTurn = std::numbers::pi / 8.0;
inline constexpr double kReach = 1.5;
inline constexpr double kCollisionRadius = 0.3;
inline constexpr double kForwardSpeed = 0.25;
inline constexpr double kStrafeSpeed = 0.2;

enum class ObjectKind : std::uint8_t { block, creature, chest, marker };
enum class ColorTag : std::uint8_t { red, blue, green, yellow, purple };
enum class MoveCommand : std::uint8_t { none, forward, back, strafe_left, strafe_right };
enum class InteractCommand : std::uint8_t { none, use, break_, attack };
enum class EventKind : std::uint8_t { use, break_, approach, attack };

inline constexpr int kMoveCount = 5;
inline constexpr int kInteractCount = 4;
inline constexpr int kEventKindCount = 4;
inline constexpr int kTurnBins = 11;

/// Turn bins evenly cover [-kMaxTurn, kMaxTurn]; bin (bins - 1) / 2 is zero.
inline double turn_for_bin(int bin, int bins = kTurnBins) {
  return -kMaxTurn + bin * (2.0 * kMaxTurn / (bins - 1));
}

inline int bin_for_turn(double turn, int bins = kTurnBins) {
  const double t = std::clamp(turn, -kMaxTurn, kMaxTurn);
  return static_cast<int>(std::lround((t + kMaxTurn) / (2.0 * kMaxTurn / (bins - 1))));
}

struct Tile {
  int x = 0;
  int y = 0;
  friend bool operator==(const Tile&, const Tile&) = default;
};

/// Grid of cells; 0 is floor, any other value is a wall texture id.
struct TileMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> cells;
  std::vector<Tile> spawnable;

  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  std::uint8_t at(int x, int y) const {
    return cells[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                 static_cast<std::size_t>(x)];
  }
  std::uint8_t& at(int x, int y) {
    return cells[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                 static_cast<std::size_t>(x)];
  }
  /// Out-of-bounds counts as wall.
  bool is_wall(int x, int y) const { return !in_bounds(x, y) || at(x, y) != 0; }
  bool is_wall_at(double x, double y) const {
    return is_wall(static_cast<int>(std::floor(x)), static_cast<int>(std::floor(y)));
  }
  friend bool operator==(const TileMap&, const TileMap&) = default;
};

struct ObjectInstance {
  int instance_id = 0;
  ObjectKind kind = ObjectKind::block;
  ColorTag color = ColorTag::red;
  double x = 0.0;
  double y = 0.0;
  bool alive = true;

  Tile tile() const {
    return {static_cast<int>(std::floor(x)), static_cast<int>(std::floor(y))};
  }
  friend bool operator==(const ObjectInstance&, const ObjectInstance&) = default;
};

inline double normalize_yaw(double yaw) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(yaw, two_pi);
  if (r < 0.0) r += two_pi;
  if (r >= two_pi) r -= two_pi;
  return r;
}

/// Signed smallest angle taking `from` to `to`, in (-pi, pi].
inline double angle_diff(double to, double from) {
  double d = normalize_yaw(to - from);
  if (d > std::numbers::pi) d -= 2.0 * std::numbers::pi;
  return d;
}

/// Yaw 0 faces +x (east); +y points south; positive yaw turns right.
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
  friend bool operator==(const Pose&, const Pose&) = default;
};

struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int h, int w) : height(h), width(w), bits(static_cast<std::size_t>(h * w), 0) {}

  std::uint8_t at(int r, int c) const {
    return bits[static_cast<std::size_t>(r * width + c)];
  }
  std::uint8_t& at(int r, int c) { return bits[static_cast<std::size_t>(r * width + c)]; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : bits) n += b != 0;
    return n;
  }
  bool empty() const { return count() == 0; }
  friend bool operator==(const Mask&, const Mask&) = default;
};

struct Observation {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;              // height * width * 3, row-major
  std::vector<std::uint32_t> instance_buffer;  // height * width, 0 = background
  Pose pose;
  int step_index = 0;

  std::uint32_t instance_at(int r, int c) const {
    return instance_buffer[static_cast<std::size_t>(r * width + c)];
  }
  friend bool operator==(const Observation&, const Observation&) = default;
};

struct Action {
  MoveCommand move = MoveCommand::none;
  double turn = 0.0;
  InteractCommand interact = InteractCommand::none;

  static Action null() { return {}; }
  friend bool operator==(const Action&, const Action&) = default;
};

struct InteractionEvent {
  int step_index = 0;
  EventKind kind = EventKind::use;
  int instance_id = 0;
  friend bool operator==(const InteractionEvent&, const InteractionEvent&) = default;
};

// ---- names -----------------------------------------------------------------

inline std::string_view to_string(ObjectKind k) {
  switch (k) {
    case ObjectKind::block: return "block";
    case ObjectKind::creature: return "creature";
    case ObjectKind::chest: return "chest";
    case ObjectKind::marker: return "marker";
  }
  return "?";
}

inline std::string_view to_string(ColorTag c) {
  switch (c) {
    case ColorTag::red: return "red";
    case ColorTag::blue: return "blue";
    case ColorTag::green: return "green";
    case ColorTag::yellow: return "yellow";
    case ColorTag::purple: return "purple";
  }
  return "?";
}

inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::use: return "use";
    case EventKind::break_: return "break";
    case EventKind::approach: return "approach";
    case EventKind::attack: return "attack";
  }
  return "?";
}

inline std::string_view to_string(MoveCommand m) {
  switch (m) {
    case MoveCommand::none: return "none";
    case MoveCommand::forward: return "forward";
    case MoveCommand::back: return "back";
    case MoveCommand::strafe_left: return "strafe_left";
    case MoveCommand::strafe_right: return "strafe_right";
  }
  return "?";
}

inline std::string_view to_string(InteractCommand i) {
  switch (i) {
    case InteractCommand::none: return "none";
    case InteractCommand::use: return "use";
    case InteractCommand::break_: return "break";
    case InteractCommand::attack: return "attack";
  }
  return "?";
}

inline ObjectKind object_kind_from(std::string_view s) {
  for (int i = 0; i < 4; ++i) {
    if (to_string(static_cast<ObjectKind>(i)) == s) return static_cast<ObjectKind>(i);
  }
  throw ConfigError("unknown object kind: " + std::string(s));
}

inline ColorTag color_from(std::string_view s) {
  for (int i = 0; i < 5; ++i) {
    if (to_string(static_cast<ColorTag>(i)) == s) return static_cast<ColorTag>(i);
  }
  throw ConfigError("unknown color: " + std::string(s));
}

inline EventKind event_kind_from(std::string_view s) {
  for (int i = 0; i < kEventKindCount; ++i) {
    if (to_string(static_cast<EventKind>(i)) == s) return static_cast<EventKind>(i);
  }
  throw ConfigError("unknown event kind: " + std::string(s));
}

/// Event produced by an interaction command, if any.
inline bool event_for(InteractCommand cmd, EventKind& out) {
  switch (cmd) {
    case InteractCommand::use: out = EventKind::use; return true;
    case InteractCommand::break_: out = EventKind::break_; return true;
    case InteractCommand::attack: out = EventKind::attack; return true;
    case InteractCommand::none: return false;
  }
  return false;
}

/// The interaction command an expert issues for a non-approach event kind.
inline InteractCommand command_for(EventKind kind) {
  switch (kind) {
    case EventKind::use: return InteractCommand::use;
    case EventKind::break_: return InteractCommand::break_;
    case EventKind::attack: return InteractCommand::attack;
    case EventKind::approach: return InteractCommand::none;
  }
  return InteractCommand::none;
}

}  // namespace xview::world
