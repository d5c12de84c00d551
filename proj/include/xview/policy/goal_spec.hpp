#pragma once

#include "xview/world/types.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace xview::policy {

/// Cross-view goal: a view of the target (o_g), the mask selecting it in
/// that view (m_g), and the interaction event to perform on it (c_g).
struct GoalSpec {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> goal_view;  // height * width * 3
  world::Mask goal_mask;
  world::EventKind event = world::EventKind::use;
  friend bool operator==(const GoalSpec&, const GoalSpec&) = default;
};

inline GoalSpec make_goal(const world::Observation& view, world::Mask mask, world::EventKind event) {
  return {view.height, view.width, view.rgb, std::move(mask), event};
}

}  // namespace xview::policy
