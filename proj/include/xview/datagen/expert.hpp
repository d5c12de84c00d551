#pragma once

#include "xview/datagen/types.hpp"
#include "xview/world/episode.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <queue>
#include <random>
#include <vector>

namespace xview::datagen {

/// What a scripted expert should do. For `approach` the expert walks up to
/// the target and faces it; for the other kinds it also issues the matching
/// interaction command.
struct ExpertTask {
  world::EventKind kind = world::EventKind::break_;
  int target_instance = 0;
};

struct ExpertOptions {
  double epsilon = 0.1;        // per-step probability of a random action
  int step_cap = 160;          // per task
  double approach_radius = 1.2;
  double approach_alignment = 0.1;  // radians; keeps the target under the centre pixel
  int stall_steps = 8;         // frames recorded when the target is unreachable
};

struct ExpertOutcome {
  bool success = false;
  std::string failure;
};

namespace detail {

/// 4-connected A* from `start` to the nearest tile from which `target` is
/// within interaction range. Returns the tile path including `start`.
inline std::optional<std::vector<world::Tile>> plan_path(const world::TileMap& map, world::Tile start,
                                                         double tx, double ty) {
  const int w = map.width;
  auto idx = [w](world::Tile t) { return t.y * w + t.x; };
  auto is_goal = [&](world::Tile t) {
    const double d = std::hypot(t.x + 0.5 - tx, t.y + 0.5 - ty);
    return d <= 1.15 && world::line_of_sight(map, t.x + 0.5, t.y + 0.5, tx, ty);
  };
  auto heuristic = [&](world::Tile t) {
    return std::max(0.0, std::abs(t.x + 0.5 - tx) + std::abs(t.y + 0.5 - ty) - 1.0);
  };
  if (map.is_wall(start.x, start.y)) return std::nullopt;
  const std::size_t n = map.cells.size();
  std::vector<double> g(n, 1e18);
  std::vector<int> parent(n, -1);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
  g[static_cast<std::size_t>(idx(start))] = 0.0;
  open.push({heuristic(start), idx(start)});
  while (!open.empty()) {
    const auto [f, cur] = open.top();
    open.pop();
    const world::Tile t{cur % w, cur / w};
    const double gc = g[static_cast<std::size_t>(cur)];
    if (f > gc + heuristic(t) + 1e-9) continue;
    if (is_goal(t)) {
      std::vector<world::Tile> path;
      for (int k = cur; k != -1; k = parent[static_cast<std::size_t>(k)]) path.push_back({k % w, k / w});
      std::reverse(path.begin(), path.end());
      return path;
    }
    const int dx[4] = {1, -1, 0, 0};
    const int dy[4] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      const world::Tile nt{t.x + dx[k], t.y + dy[k]};
      if (map.is_wall(nt.x, nt.y)) continue;
      const auto ni = static_cast<std::size_t>(idx(nt));
      if (gc + 1.0 < g[ni]) {
        g[ni] = gc + 1.0;
        parent[ni] = cur;
        open.push({gc + 1.0 + heuristic(nt), idx(nt)});
      }
    }
  }
  return std::nullopt;
}

inline double quantized_turn(double diff) {
  return world::turn_for_bin(world::bin_for_turn(std::clamp(diff, -world::kMaxTurn, world::kMaxTurn)));
}

inline world::Action random_action(std::mt19937_64& rng) {
  world::Action a;
  a.move = static_cast<world::MoveCommand>(rng() % world::kMoveCount);
  a.turn = world::turn_for_bin(static_cast<int>(rng() % world::kTurnBins));
  return a;
}

/// Greedy controller step toward the target; nullopt once an approach task
/// has arrived.
inline std::optional<world::Action> expert_action(const world::EpisodeState& s, const ExpertTask& task,
                                                  const world::ObjectInstance& target,
                                                  const ExpertOptions& opt, bool& unreachable) {
  unreachable = false;
  const double dx = target.x - s.pose.x;
  const double dy = target.y - s.pose.y;
  const double d = std::hypot(dx, dy);
  const bool approach = task.kind == world::EventKind::approach;
  world::Action a;
  if (d <= 1.3 && world::line_of_sight(s.map, s.pose.x, s.pose.y, target.x, target.y)) {
    const double diff = world::angle_diff(std::atan2(dy, dx), s.pose.yaw);
    const auto aimed = world::aimed_instance(s);
    const bool on_target = aimed && *aimed == target.instance_id;
    if (approach) {
      if (d <= opt.approach_radius && std::abs(diff) < opt.approach_alignment) return std::nullopt;
    } else if (on_target && std::abs(diff) < 0.25) {
      a.interact = world::command_for(task.kind);
      return a;
    }
    a.turn = quantized_turn(diff);
    if (a.turn == 0.0) {
      // Facing it already: close in, or sidestep whatever is in the way.
      if (approach || d > 0.9) {
        a.move = world::MoveCommand::forward;
      } else {
        a.move = world::MoveCommand::strafe_left;
      }
    }
    return a;
  }
  const world::Tile here{static_cast<int>(std::floor(s.pose.x)), static_cast<int>(std::floor(s.pose.y))};
  const auto path = plan_path(s.map, here, target.x, target.y);
  if (!path) {
    unreachable = true;
    return a;
  }
  double wx = target.x;
  double wy = target.y;
  if (path->size() > 1) {
    wx = (*path)[1].x + 0.5;
    wy = (*path)[1].y + 0.5;
  }
  const double diff = world::angle_diff(std::atan2(wy - s.pose.y, wx - s.pose.x), s.pose.yaw);
  a.turn = quantized_turn(diff);
  if (std::abs(diff) < 0.6) a.move = world::MoveCommand::forward;
  return a;
}

}  // namespace detail

/// Runs one expert task on an ongoing episode, appending frames and events
/// to `traj`. Frame indices in `traj` are used for event step indices.
inline ExpertOutcome run_expert_task(world::EpisodeState& s, const ExpertTask& task, std::mt19937_64& rng,
                                     const ExpertOptions& opt, RawTrajectory& traj) {
  ExpertOutcome outcome;
  std::bernoulli_distribution noise(opt.epsilon);
  for (int k = 0; k < opt.step_cap; ++k) {
    if (s.done) {
      outcome.failure = "episode ended";
      return outcome;
    }
    const world::ObjectInstance* target = s.find(task.target_instance);
    if (target == nullptr || !target->alive) {
      outcome.failure = "target missing";
      return outcome;
    }
    bool unreachable = false;
    auto action = detail::expert_action(s, task, *target, opt, unreachable);
    if (unreachable) {
      outcome.failure = "target unreachable";
      for (int i = 0; i < opt.stall_steps && !s.done; ++i) {
        world::Action spin;
        spin.turn = world::kMaxTurn;
        traj.observations.push_back(s.observe());
        traj.actions.push_back(spin);
        world::step(s, spin);
      }
      return outcome;
    }
    if (!action) {
      outcome.success = true;
      return outcome;
    }
    if (action->interact == world::InteractCommand::none && noise(rng)) action = detail::random_action(rng);
    const int frame = static_cast<int>(traj.observations.size());
    traj.observations.push_back(s.observe());
    traj.actions.push_back(*action);
    const auto result = world::step(s, *action);
    for (auto e : result.events) {
      e.step_index = frame;
      traj.events.push_back(e);
      if (e.instance_id == task.target_instance && e.kind == task.kind) outcome.success = true;
    }
    if (outcome.success) return outcome;
  }
  outcome.failure = "step cap reached";
  return outcome;
}

/// Single-task trajectory from the episode's current state.
inline RawTrajectory run_expert(world::EpisodeState& s, const ExpertTask& task, std::uint64_t seed,
                                const ExpertOptions& opt = {}) {
  std::mt19937_64 rng(seed);
  RawTrajectory traj;
  const auto outcome = run_expert_task(s, task, rng, opt, traj);
  traj.failed = !outcome.success;
  traj.failure = outcome.failure;
  if (traj.observations.empty()) {
    traj.observations.push_back(s.observe());
    traj.actions.push_back(world::Action::null());
  }
  return traj;
}

}  // namespace xview::datagen
