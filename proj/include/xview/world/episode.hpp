#pragma once

#include "xview/world/render.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace xview::world {

struct EpisodeState {
  TileMap map;
  std::vector<ObjectInstance> objects;
  Pose pose;
  int step_index = 0;
  int max_steps = 512;
  bool done = false;
  RenderOptions render_options;

  Observation observe() const {
    Observation obs = render(map, objects, pose, render_options);
    obs.step_index = step_index;
    return obs;
  }

  const ObjectInstance* find(int instance_id) const {
    for (const auto& o : objects) {
      if (o.instance_id == instance_id) return &o;
    }
    return nullptr;
  }
};

struct StepResult {
  Observation observation;
  std::vector<InteractionEvent> events;
  bool done = false;
};

inline EpisodeState start_episode(const GeneratedWorld& world, const Pose& spawn, int max_steps = 512,
                                  const RenderOptions& options = {}) {
  check_camera(world.map, spawn);
  EpisodeState s;
  s.map = world.map;
  s.objects = world.objects;
  s.pose = {spawn.x, spawn.y, normalize_yaw(spawn.yaw)};
  s.max_steps = max_steps;
  s.render_options = options;
  return s;
}

inline bool body_fits(const TileMap& map, double x, double y) {
  const double r = kCollisionRadius;
  return !map.is_wall_at(x - r, y - r) && !map.is_wall_at(x + r, y - r) &&
         !map.is_wall_at(x - r, y + r) && !map.is_wall_at(x + r, y + r);
}

/// True when the straight segment between two points stays on floor cells.
inline bool line_of_sight(const TileMap& map, double x0, double y0, double x1, double y1) {
  const double len = std::hypot(x1 - x0, y1 - y0);
  const int n = std::max(1, static_cast<int>(std::ceil(len / 0.05)));
  for (int i = 1; i < n; ++i) {
    const double t = static_cast<double>(i) / n;
    if (map.is_wall_at(x0 + t * (x1 - x0), y0 + t * (y1 - y0))) return false;
  }
  return true;
}

/// Half-width (tiles) used for crosshair targeting.
inline constexpr double kAimHalfWidth = 0.4;

/// The live instance the crosshair selects within reach, if any: nearest
/// instance within `reach` whose angular offset from the view axis is below
/// atan(kAimHalfWidth / distance) and which is not hidden behind a wall.
inline std::optional<int> aimed_instance(const EpisodeState& s, double reach = kReach) {
  std::optional<int> best;
  double best_d = 0.0;
  for (const auto& o : s.objects) {
    if (!o.alive) continue;
    const double dx = o.x - s.pose.x;
    const double dy = o.y - s.pose.y;
    const double d = std::hypot(dx, dy);
    if (d > reach) continue;
    const double off = std::abs(angle_diff(std::atan2(dy, dx), s.pose.yaw));
    if (off > std::atan2(kAimHalfWidth, std::max(d, 1e-9))) continue;
    if (!line_of_sight(s.map, s.pose.x, s.pose.y, o.x, o.y)) continue;
    if (!best || d < best_d) {
      best = o.instance_id;
      best_d = d;
    }
  }
  return best;
}

/// Advances one tick. The interaction is resolved against the pose the
/// command was issued from; movement (with wall sliding) and turning follow.
inline StepResult step(EpisodeState& s, const Action& action) {
  if (s.done) throw EpisodeFinishedError("step() called on a finished episode");
  // Events carry the index of the tick on which the command was issued.
  StepResult result;
  const int tick = s.step_index++;
  EventKind kind{};
  if (event_for(action.interact, kind)) {
    if (auto target = aimed_instance(s)) {
      result.events.push_back({tick, kind, *target});
      if (kind == EventKind::break_ || kind == EventKind::attack) {
        for (auto& o : s.objects) {
          if (o.instance_id == *target) o.alive = false;
        }
      }
    }
  }
  const double c = std::cos(s.pose.yaw);
  const double sn = std::sin(s.pose.yaw);
  double mx = 0.0;
  double my = 0.0;
  switch (action.move) {
    case MoveCommand::forward: mx = c * kForwardSpeed; my = sn * kForwardSpeed; break;
    case MoveCommand::back: mx = -c * kForwardSpeed; my = -sn * kForwardSpeed; break;
    case MoveCommand::strafe_left: mx = sn * kStrafeSpeed; my = -c * kStrafeSpeed; break;
    case MoveCommand::strafe_right: mx = -sn * kStrafeSpeed; my = c * kStrafeSpeed; break;
    case MoveCommand::none: break;
  }
  if (mx != 0.0 && body_fits(s.map, s.pose.x + mx, s.pose.y)) s.pose.x += mx;
  if (my != 0.0 && body_fits(s.map, s.pose.x, s.pose.y + my)) s.pose.y += my;
  s.pose.yaw = normalize_yaw(s.pose.yaw + std::clamp(action.turn, -kMaxTurn, kMaxTurn));

  if (s.step_index >= s.max_steps) s.done = true;
  result.observation = s.observe();
  result.done = s.done;
  return result;
}

}  // namespace xview::world
