#pragma once

#include "xview/training/centroid.hpp"
#include "xview/world/types.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace xview::datagen {

struct RawTrajectory {
  int episode_id = 0;
  std::vector<world::Observation> observations;  // frame t is observed before actions[t]
  std::vector<world::Action> actions;
  std::vector<world::InteractionEvent> events;  // sorted by step_index
  bool failed = false;
  std::string failure;

  std::size_t length() const { return observations.size(); }
};

struct FrameLabel {
  world::Mask mask;
  bool visible = false;
  std::optional<training::PixelPoint> centroid;
  friend bool operator==(const FrameLabel&, const FrameLabel&) = default;
};

struct ClipFrame {
  world::Observation observation;
  world::Action action;
  FrameLabel label;
  friend bool operator==(const ClipFrame&, const ClipFrame&) = default;
};

struct TrajectoryClip {
  world::EventKind event_kind = world::EventKind::use;
  int target_instance = 0;
  int span_begin = 0;  // inclusive frame indices into the source trajectory
  int span_end = 0;
  std::vector<ClipFrame> frames;

  int length() const { return static_cast<int>(frames.size()); }
  friend bool operator==(const TrajectoryClip&, const TrajectoryClip&) = default;
};

inline constexpr std::uint32_t kShardFormatVersion = 1;

struct DatasetShard {
  std::vector<TrajectoryClip> clips;
  std::array<std::uint32_t, world::kEventKindCount> manifest{};
  std::uint32_t format_version = kShardFormatVersion;
  friend bool operator==(const DatasetShard&, const DatasetShard&) = default;
};

inline std::array<std::uint32_t, world::kEventKindCount> count_events(
    const std::vector<TrajectoryClip>& clips) {
  std::array<std::uint32_t, world::kEventKindCount> counts{};
  for (const auto& c : clips) ++counts[static_cast<std::size_t>(c.event_kind)];
  return counts;
}

inline FrameLabel make_label(world::Mask mask) {
  FrameLabel l;
  l.centroid = training::centroid(mask);
  l.visible = l.centroid.has_value();
  l.mask = std::move(mask);
  return l;
}

}  // namespace xview::datagen
