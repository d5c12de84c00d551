#pragma once

#include "xview/datagen/types.hpp"
#include "xview/policy/goal_spec.hpp"

#include <random>
#include <vector>

namespace xview::datagen {

/// Indices of frames whose target mask is nonempty.
inline std::vector<int> visible_frames(const TrajectoryClip& clip) {
  std::vector<int> out;
  for (int t = 0; t < clip.length(); ++t) {
    if (clip.frames[static_cast<std::size_t>(t)].label.visible) out.push_back(t);
  }
  return out;
}

/// Picks a goal view uniformly among the clip's visible frames.
template <typename Rng>
policy::GoalSpec sample_goal_view(const TrajectoryClip& clip, Rng& rng, int* chosen = nullptr) {
  const auto visible = visible_frames(clip);
  if (visible.empty()) throw InvalidClipError("clip has no frame with a visible target");
  std::uniform_int_distribution<std::size_t> pick(0, visible.size() - 1);
  const int g = visible[pick(rng)];
  if (chosen != nullptr) *chosen = g;
  const auto& f = clip.frames[static_cast<std::size_t>(g)];
  return policy::make_goal(f.observation, f.label.mask, clip.event_kind);
}

}  // namespace xview::datagen
