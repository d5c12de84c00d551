#pragma once

#include "xview/datagen/approach.hpp"
#include "xview/datagen/types.hpp"
#include "xview/world/render.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace xview::datagen {

inline constexpr int kMaxTrackLength = 128;

/// Hindsight relabeling. For every event at frame j on instance e, walks
/// backward from j and emits the clip [i, j] where i is the frame after the
/// previous event (of any kind) or j - max_track_length + 1, whichever is
/// later. Labels come from the instance buffers; frames where e is out of
/// view keep empty masks. Events whose target has no pixels at frame j are
/// skipped and reported through `warnings`.
inline std::vector<TrajectoryClip> relabel_backward(const RawTrajectory& traj, int max_track_length,
                                                    std::vector<std::string>* warnings = nullptr) {
  if (max_track_length < 1) throw ConfigError("max_track_length must be >= 1");
  std::vector<world::InteractionEvent> events = traj.events;
  std::stable_sort(events.begin(), events.end(),
                   [](const auto& a, const auto& b) { return a.step_index < b.step_index; });
  std::vector<TrajectoryClip> clips;
  const int n = static_cast<int>(traj.length());
  for (std::size_t k = 0; k < events.size(); ++k) {
    const auto& ev = events[k];
    const int j = ev.step_index;
    if (j < 0 || j >= n) throw InvalidClipError("event step index outside trajectory");
    const auto id = static_cast<std::uint32_t>(ev.instance_id);
    if (world::mask_of(traj.observations[static_cast<std::size_t>(j)], id).empty()) {
      if (warnings != nullptr) {
        warnings->push_back("episode " + std::to_string(traj.episode_id) + ": event at frame " +
                            std::to_string(j) + " on instance " + std::to_string(ev.instance_id) +
                            " has an empty mask; skipped");
      }
      continue;
    }
    int begin = std::max(0, j - max_track_length + 1);
    for (std::size_t p = 0; p < k; ++p) {
      if (events[p].step_index < j) begin = std::max(begin, events[p].step_index + 1);
    }
    TrajectoryClip clip;
    clip.event_kind = ev.kind;
    clip.target_instance = ev.instance_id;
    clip.span_begin = begin;
    clip.span_end = j;
    for (int t = begin; t <= j; ++t) {
      const auto& obs = traj.observations[static_cast<std::size_t>(t)];
      clip.frames.push_back({obs, traj.actions[static_cast<std::size_t>(t)], make_label(world::mask_of(obs, id))});
    }
    clips.push_back(std::move(clip));
  }
  return clips;
}

/// Adds detected approach events to the trajectory's event list, keeping it
/// sorted by frame.
inline RawTrajectory with_approach_events(RawTrajectory traj, double threshold = kApproachThreshold,
                                          int window = kApproachWindow) {
  for (const auto& e : detect_approach_events(traj, threshold, window)) traj.events.push_back(e);
  std::stable_sort(traj.events.begin(), traj.events.end(),
                   [](const auto& a, const auto& b) { return a.step_index < b.step_index; });
  return traj;
}

}  // namespace xview::datagen
