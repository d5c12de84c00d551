#pragma once

#include "xview/datagen/types.hpp"
#include "xview/policy/model.hpp"
#include "xview/training/centroid.hpp"

#include <cmath>
#include <string_view>
#include <vector>

namespace xview::training {

enum class Ablation : std::uint8_t { bc_only, bc_vis, full };

inline std::string_view to_string(Ablation a) {
  switch (a) {
    case Ablation::bc_only: return "bc_only";
    case Ablation::bc_vis: return "bc_vis";
    case Ablation::full: return "full";
  }
  return "?";
}

inline Ablation ablation_from(std::string_view s) {
  if (s == "bc_only") return Ablation::bc_only;
  if (s == "bc_vis") return Ablation::bc_vis;
  if (s == "full") return Ablation::full;
  throw ConfigError("unknown ablation: " + std::string(s));
}

struct LossWeights {
  double bc = 1.0;
  double centroid = 1.0;
  double visibility = 1.0;
};

/// Unweighted loss terms; total is their plain sum.
struct LossBreakdown {
  double bc = 0.0;
  double centroid = 0.0;
  double visibility = 0.0;
  double total = 0.0;
};

/// Supervision for one frame.
struct FrameTarget {
  int move = 0;
  int interact = 0;
  int turn_bin = 0;
  bool visible = false;
  int centroid_cell = -1;  // -1 when the target is not visible
};

inline FrameTarget frame_target(const datagen::ClipFrame& f, int patch_size, int image_size, int turn_bins) {
  FrameTarget t;
  t.move = static_cast<int>(f.action.move);
  t.interact = static_cast<int>(f.action.interact);
  t.turn_bin = world::bin_for_turn(f.action.turn, turn_bins);
  t.visible = f.label.visible;
  if (t.visible) t.centroid_cell = centroid_to_cell(*f.label.centroid, patch_size, image_size, image_size);
  return t;
}

inline std::vector<FrameTarget> clip_targets(const datagen::TrajectoryClip& clip, const policy::ModelConfig& c) {
  std::vector<FrameTarget> out;
  for (const auto& f : clip.frames) out.push_back(frame_target(f, c.patch_size, c.image_size, c.turn_bins));
  return out;
}

template <typename T>
struct LossTerms {
  nn::Var<T> bc;
  nn::Var<T> centroid;
  nn::Var<T> visibility;
  nn::Var<T> objective;  // weighted sum of the terms the ablation keeps
  LossBreakdown breakdown;
};

/// Summed cross-entropies over frames: action heads always, visibility for
/// bc_vis and full, centroid (visible frames only) for full.
template <typename T>
LossTerms<T> clip_loss(const policy::HeadOutputs<T>& out, const std::vector<FrameTarget>& targets,
                       Ablation ablation, const LossWeights& weights = {}) {
  const auto n = static_cast<nn::Index>(targets.size());
  if (out.move.rows() != n || out.centroid.rows() != n || out.visibility.rows() != n) {
    throw InvalidClipError("clip_loss: outputs and clip differ in length");
  }
  std::vector<int> move;
  std::vector<int> interact;
  std::vector<int> turn;
  std::vector<int> cell;
  std::vector<T> ones(targets.size(), T(1));
  std::vector<T> vis_w(targets.size(), T(1));
  std::vector<T> vis_t;
  std::vector<T> cell_w;
  for (const auto& t : targets) {
    move.push_back(t.move);
    interact.push_back(t.interact);
    turn.push_back(t.turn_bin);
    cell.push_back(t.visible ? t.centroid_cell : -1);
    cell_w.push_back(t.visible ? T(1) : T(0));
    vis_t.push_back(t.visible ? T(1) : T(0));
  }
  LossTerms<T> r;
  r.bc = nn::add_scalars(std::vector<nn::Var<T>>{nn::softmax_cross_entropy(out.move, move, ones),
                                                 nn::softmax_cross_entropy(out.interact, interact, ones),
                                                 nn::softmax_cross_entropy(out.turn, turn, ones)});
  std::vector<nn::Var<T>> kept{nn::scale(r.bc, static_cast<T>(weights.bc))};
  if (ablation != Ablation::bc_only) {
    r.visibility = nn::sigmoid_binary_cross_entropy(out.visibility, vis_t, vis_w);
    kept.push_back(nn::scale(r.visibility, static_cast<T>(weights.visibility)));
    r.breakdown.visibility = static_cast<double>(r.visibility.item());
  }
  if (ablation == Ablation::full) {
    r.centroid = nn::softmax_cross_entropy(out.centroid, cell, cell_w);
    kept.push_back(nn::scale(r.centroid, static_cast<T>(weights.centroid)));
    r.breakdown.centroid = static_cast<double>(r.centroid.item());
  }
  r.breakdown.bc = static_cast<double>(r.bc.item());
  r.breakdown.total = r.breakdown.bc + r.breakdown.centroid + r.breakdown.visibility;
  r.objective = nn::add_scalars(kept);
  return r;
}

/// Per-frame uniform cross-entropy of a freshly initialised (zero-head) model.
inline LossBreakdown uniform_loss(const std::vector<FrameTarget>& targets, const policy::ModelConfig& c,
                                  Ablation ablation) {
  LossBreakdown b;
  const double action = std::log(5.0) + std::log(4.0) + std::log(static_cast<double>(c.turn_bins));
  for (const auto& t : targets) {
    b.bc += action;
    if (ablation != Ablation::bc_only) b.visibility += std::log(2.0);
    if (ablation == Ablation::full && t.visible) b.centroid += std::log(static_cast<double>(c.tokens()));
  }
  b.total = b.bc + b.centroid + b.visibility;
  return b;
}

}  // namespace xview::training
