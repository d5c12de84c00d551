#pragma once

#include "xview/image.hpp"
#include "xview/runtime/session.hpp"

#include <algorithm>
#include <optional>
#include <set>

namespace xview::introspect {

/// First spatial-fusion layer attention for one (current, goal) pair.
/// Rows and columns are fused tokens: current view first, goal view second.
struct AttentionMap {
  int tokens_per_view = 0;          // P^2
  nn::Matrix<double> mean;          // head-averaged
  std::vector<nn::Matrix<double>> per_head;

  int size() const { return static_cast<int>(mean.rows()); }
};

template <typename M>
concept ExposesSpatialAttention = requires(const M& m, const nn::Var<float>& x,
                                           std::vector<policy::SpatialAttention<float>>* a) {
  { m.spatial_fusion(x, x, a) };
  { m.encode_view(std::vector<std::uint8_t>{}) };
  { m.encode_goal(policy::GoalSpec{}) };
  { m.config() };
};

/// One forward pass through spatial fusion with attention capture. The
/// current frame and goal are resized to the model's resolution first.
template <typename M>
AttentionMap extract_attention(const M& model, const world::Observation& current, const policy::GoalSpec& goal) {
  if constexpr (!ExposesSpatialAttention<M>) {
    throw CapabilityError("model does not expose spatial attention");
  } else {
    const int size = model.config().image_size;
    const auto g = runtime::to_policy_goal(goal, size);
    if (g.goal_mask.empty()) throw InvalidGoalError("goal mask is empty");
    const auto rgb = runtime::to_policy_rgb(current.rgb, current.height, current.width, size);
    nn::NoGradGuard guard;
    std::vector<policy::SpatialAttention<float>> att;
    model.spatial_fusion(model.encode_view(rgb), model.encode_goal(g), &att);
    if (att.size() != 1 || att.front().per_head.empty()) throw CapabilityError("no attention was captured");
    AttentionMap out;
    out.tokens_per_view = model.config().tokens();
    const auto& heads = att.front().per_head;
    out.mean = nn::Matrix<double>::Zero(heads.front().rows(), heads.front().cols());
    for (const auto& h : heads) {
      out.per_head.push_back(h.template cast<double>());
      out.mean += out.per_head.back();
    }
    out.mean /= static_cast<double>(heads.size());
    return out;
  }
}

/// Landmark patches on the current view, 1-based in [1, P^2].
struct LandmarkPatchSet {
  std::vector<int> indices;
};

/// Patches (1-based) that contain at least one goal-mask pixel.
inline std::set<int> mask_patches(const world::Mask& mask, int patch) {
  std::set<int> out;
  const int grid = mask.width / patch;
  for (int r = 0; r < mask.height; ++r)
    for (int c = 0; c < mask.width; ++c)
      if (mask.at(r, c) != 0) out.insert((r / patch) * grid + c / patch + 1);
  return out;
}

/// Validates a landmark set: nonempty, unique, in range, and (when a goal
/// mask at policy resolution is given) not overlapping the goal's patches.
inline LandmarkPatchSet make_landmarks(std::vector<int> indices, int tokens_per_view,
                                       const world::Mask* goal_mask = nullptr, int patch = 0) {
  if (indices.empty()) throw ValidationError("landmark set is empty");
  std::set<int> seen;
  for (int i : indices) {
    if (i < 1 || i > tokens_per_view) {
      throw RangeError("landmark index " + std::to_string(i) + " outside [1, " + std::to_string(tokens_per_view) + "]");
    }
    if (!seen.insert(i).second) throw ValidationError("landmark index " + std::to_string(i) + " repeated");
  }
  if (goal_mask != nullptr) {
    const auto covered = mask_patches(*goal_mask, patch);
    for (int i : indices) {
      if (covered.count(i)) throw ValidationError("landmark " + std::to_string(i) + " overlaps the goal mask");
    }
  }
  return {std::move(indices)};
}

/// m_i = (1/|L|) sum_{x in L} a_{x, i + P^2} over the head-averaged map,
/// or over one head's map when `head` is given.
inline std::vector<double> landmark_response(const AttentionMap& att, const LandmarkPatchSet& landmarks,
                                             std::optional<int> head = std::nullopt) {
  const int p2 = att.tokens_per_view;
  if (landmarks.indices.empty()) throw ValidationError("landmark set is empty");
  if (head && (*head < 0 || *head >= static_cast<int>(att.per_head.size()))) {
    throw RangeError("head " + std::to_string(*head) + " outside [0, " + std::to_string(att.per_head.size()) + ")");
  }
  const auto& a = head ? att.per_head[static_cast<std::size_t>(*head)] : att.mean;
  std::vector<double> m(static_cast<std::size_t>(p2), 0.0);
  for (int x : landmarks.indices) {
    if (x < 1 || x > p2) throw RangeError("landmark index " + std::to_string(x) + " out of range");
    for (int i = 0; i < p2; ++i) m[static_cast<std::size_t>(i)] += a(x - 1, i + p2);
  }
  for (auto& v : m) v /= static_cast<double>(landmarks.indices.size());
  return m;
}

namespace detail {

inline Image upscale(const std::vector<std::uint8_t>& rgb, int h, int w, int scale) {
  Image out(h * scale, w * scale, 3);
  for (int r = 0; r < out.height; ++r)
    for (int c = 0; c < out.width; ++c)
      for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = rgb[static_cast<std::size_t>(((r / scale) * w + c / scale) * 3 + ch)];
  return out;
}

}  // namespace detail

/// Min-max normalised heat per patch; a constant map gives all zeros.
inline std::vector<double> normalise_heat(const std::vector<double>& m) {
  const auto [lo, hi] = std::minmax_element(m.begin(), m.end());
  std::vector<double> out(m.size(), 0.0);
  if (m.empty() || *hi - *lo <= 0.0) return out;
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = (m[i] - *lo) / (*hi - *lo);
  return out;
}

struct OverlayOptions {
  int scale = 4;         // display pixels per policy pixel
  double alpha = 0.5;    // heat opacity
};

/// Side by side: current view with a white grid around each landmark patch,
/// goal view tinted by the response (blue = low, red = high). Both images
/// are taken at policy resolution (size x size).
inline Image render_overlay(const std::vector<double>& response, const std::vector<std::uint8_t>& goal_view,
                            const LandmarkPatchSet& landmarks, const std::vector<std::uint8_t>& current_view,
                            int size, int patch, const OverlayOptions& opt = {}) {
  const int grid = size / patch;
  if (static_cast<int>(response.size()) != grid * grid) throw nn::ShapeError("overlay: response size mismatch");
  if (goal_view.size() != static_cast<std::size_t>(size * size * 3) ||
      current_view.size() != static_cast<std::size_t>(size * size * 3)) {
    throw nn::ShapeError("overlay: views must be size x size RGB");
  }
  const int s = opt.scale;
  const int disp = size * s;
  const auto left = detail::upscale(current_view, size, size, s);
  const auto right = detail::upscale(goal_view, size, size, s);
  Image out(disp, 2 * disp, 3);
  const auto heat = normalise_heat(response);
  for (int r = 0; r < disp; ++r) {
    for (int c = 0; c < disp; ++c) {
      const double h = heat[static_cast<std::size_t>((r / s / patch) * grid + (c / s / patch))];
      const double tint[3] = {255.0 * h, 0.0, 255.0 * (1.0 - h)};
      for (int ch = 0; ch < 3; ++ch) {
        out.at(r, c, ch) = left.at(r, c, ch);
        out.at(r, disp + c, ch) =
            static_cast<std::uint8_t>(std::lround((1.0 - opt.alpha) * right.at(r, c, ch) + opt.alpha * tint[ch]));
      }
    }
  }
  const int cell = patch * s;
  for (int idx : landmarks.indices) {
    const int r0 = ((idx - 1) / grid) * cell;
    const int c0 = ((idx - 1) % grid) * cell;
    for (int k = 0; k < cell; ++k) {
      for (auto [r, c] : {std::pair{r0, c0 + k}, std::pair{r0 + cell - 1, c0 + k}, std::pair{r0 + k, c0},
                          std::pair{r0 + k, c0 + cell - 1}}) {
        for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = 255;
      }
    }
  }
  return out;
}

inline void export_overlay(const std::string& path, const std::vector<double>& response,
                           const std::vector<std::uint8_t>& goal_view, const LandmarkPatchSet& landmarks,
                           const std::vector<std::uint8_t>& current_view, int size, int patch,
                           const OverlayOptions& opt = {}) {
  write_png(path, render_overlay(response, goal_view, landmarks, current_view, size, patch, opt));
}

}  // namespace xview::introspect
