#pragma once

#include "xview/datagen/types.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace xview::datagen {

inline constexpr double kApproachThreshold = 8.0;  // tiles
inline constexpr int kApproachWindow = 64;         // frames

/// Euclidean displacement (tiles) between frame `end` and the start of the
/// window that ends there.
inline double window_displacement(const RawTrajectory& traj, int end, int window = kApproachWindow) {
  const int start = std::max(0, end - window);
  const auto& a = traj.observations[static_cast<std::size_t>(start)].pose;
  const auto& b = traj.observations[static_cast<std::size_t>(end)].pose;
  return std::hypot(b.x - a.x, b.y - a.y);
}

inline std::uint32_t center_instance(const world::Observation& obs) {
  return obs.instance_at(obs.height / 2, obs.width / 2);
}

/// Frame t qualifies when the window ending at t moved more than
/// `threshold` tiles and the centre pixel of frame t lies on an instance.
/// One approach event is emitted at the last frame of every maximal run of
/// consecutive qualifying frames that share the same centre instance.
inline std::vector<world::InteractionEvent> detect_approach_events(const RawTrajectory& traj,
                                                                  double threshold = kApproachThreshold,
                                                                  int window = kApproachWindow) {
  if (!(threshold > 0.0)) throw ConfigError("approach threshold must be positive");
  std::vector<world::InteractionEvent> events;
  const int n = static_cast<int>(traj.length());
  std::uint32_t run_id = 0;
  for (int t = 0; t <= n; ++t) {
    std::uint32_t id = 0;
    if (t < n) {
      const auto& obs = traj.observations[static_cast<std::size_t>(t)];
      const std::uint32_t center = center_instance(obs);
      if (center != 0 && window_displacement(traj, t, window) > threshold) id = center;
    }
    if (run_id != 0 && id != run_id) {
      events.push_back({t - 1, world::EventKind::approach, static_cast<int>(run_id)});
    }
    run_id = id;
  }
  return events;
}

}  // namespace xview::datagen
