#pragma once

#include "xview/world/generate.hpp"
#include "xview/world/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace xview::world {

/// Camera and appearance parameters. Defaults produce the base skin.
struct RenderOptions {
  int width = kFrameSize;
  int height = kFrameSize;
  double fov = 2.0 * std::atan(0.66);
  // Output colour = clamp(matrix * rgb + offset), applied after compositing.
  std::array<double, 9> color_matrix{1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::array<double, 3> color_offset{0, 0, 0};
  int texture_variant = 0;
};

struct Rgb {
  double r = 0, g = 0, b = 0;
};

namespace detail {

enum class Face { west, east, north, south };

inline Rgb wall_color(std::uint8_t tex, Face face) {
  switch (tex) {
    case texture::west: return {200, 180, 60};
    case texture::east: return {60, 120, 200};
    case texture::north: return {170, 170, 170};
    case texture::south: return {120, 160, 110};
    case texture::pillar:
      if (face == Face::west) return {220, 120, 40};
      if (face == Face::east) return {40, 200, 200};
      return {150, 100, 150};
    default: return {130, 110, 90};
  }
}

inline Rgb object_color(ColorTag c) {
  switch (c) {
    case ColorTag::red: return {220, 40, 40};
    case ColorTag::blue: return {40, 60, 230};
    case ColorTag::green: return {40, 190, 60};
    case ColorTag::yellow: return {240, 220, 40};
    case ColorTag::purple: return {150, 60, 200};
  }
  return {255, 255, 255};
}

struct SpriteSize {
  double width;
  double height;
};

inline SpriteSize sprite_size(ObjectKind k) {
  switch (k) {
    case ObjectKind::block: return {0.7, 0.7};
    case ObjectKind::creature: return {0.8, 0.6};
    case ObjectKind::chest: return {0.7, 0.6};
    case ObjectKind::marker: return {0.5, 0.9};
  }
  return {0.7, 0.7};
}

/// Shape coverage in sprite-local coordinates (u across, v down, both
/// in [0,1)). Returns 0 for transparent, otherwise a shade multiplier.
inline double sprite_shade(ObjectKind k, double u, double v) {
  switch (k) {
    case ObjectKind::block: {
      const bool edge = u < 0.08 || u > 0.92 || v < 0.08 || v > 0.92;
      return edge ? 0.6 : 1.0;
    }
    case ObjectKind::creature: {
      const double bu = (u - 0.5) / 0.5;
      const double bv = (v - 0.42) / 0.36;
      if (bu * bu + bv * bv <= 1.0) return 1.0;
      const double hu = (u - 0.15) / 0.15;
      const double hv = (v - 0.2) / 0.2;
      if (hu * hu + hv * hv <= 1.0) return 0.8;
      if (v >= 0.7) {
        for (double leg : {0.22, 0.4, 0.6, 0.78}) {
          if (std::abs(u - leg) < 0.05) return 0.55;
        }
      }
      return 0.0;
    }
    case ObjectKind::chest: {
      if (v < 0.05) return 0.0;
      if (v > 0.42 && v < 0.5) return 0.5;
      if (std::abs(u - 0.5) < 0.07 && v > 0.5 && v < 0.65) return 0.3;
      return (u < 0.06 || u > 0.94) ? 0.7 : 1.0;
    }
    case ObjectKind::marker: {
      if (std::abs(u - 0.5) < 0.1) return 0.65;
      if (u >= 0.5 && u < 0.95 && v < 0.35) return 1.0;
      return 0.0;
    }
  }
  return 0.0;
}

inline double wall_pattern(int variant, double u, double v) {
  if (variant == 0) {
    const int row = static_cast<int>(v * 4.0);
    const double shifted = u + (row % 2 == 0 ? 0.0 : 0.5);
    const double fu = shifted - std::floor(shifted * 2.0) / 2.0;
    const double fv = v * 4.0 - std::floor(v * 4.0);
    return (fu < 0.04 || fv < 0.08) ? 0.75 : 1.0;
  }
  const double fu = u * 5.0 - std::floor(u * 5.0);
  return fu < 0.5 ? 1.0 : 0.82;
}

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace detail

struct ColumnHit {
  double distance = 0.0;  // perpendicular to the camera plane
  std::uint8_t texture = 0;
  detail::Face face = detail::Face::west;
  double u = 0.0;  // horizontal texture coordinate in [0,1)
};

inline void check_camera(const TileMap& map, const Pose& camera) {
  if (!(camera.x > 0.0 && camera.y > 0.0 && camera.x < map.width && camera.y < map.height)) {
    throw InvalidPoseError("camera outside map bounds");
  }
  if (map.is_wall_at(camera.x, camera.y)) throw InvalidPoseError("camera inside a wall cell");
}

inline double focal_length(const RenderOptions& opt) {
  return (opt.width / 2.0) / std::tan(opt.fov / 2.0);
}

/// Casts one ray per screen column (DDA over tiles).
inline std::vector<ColumnHit> cast_columns(const TileMap& map, const Pose& camera,
                                           const RenderOptions& opt = {}) {
  check_camera(map, camera);
  const double fx = std::cos(camera.yaw);
  const double fy = std::sin(camera.yaw);
  const double rx = -fy;
  const double ry = fx;
  const double half = std::tan(opt.fov / 2.0);
  std::vector<ColumnHit> hits(static_cast<std::size_t>(opt.width));
  for (int c = 0; c < opt.width; ++c) {
    const double cam = 2.0 * (c + 0.5) / opt.width - 1.0;
    const double dx = fx + rx * cam * half;
    const double dy = fy + ry * cam * half;
    int mx = static_cast<int>(std::floor(camera.x));
    int my = static_cast<int>(std::floor(camera.y));
    const double inf = std::numeric_limits<double>::infinity();
    const double ddx = dx == 0.0 ? inf : std::abs(1.0 / dx);
    const double ddy = dy == 0.0 ? inf : std::abs(1.0 / dy);
    const int sx = dx < 0 ? -1 : 1;
    const int sy = dy < 0 ? -1 : 1;
    double side_x = dx < 0 ? (camera.x - mx) * ddx : (mx + 1.0 - camera.x) * ddx;
    double side_y = dy < 0 ? (camera.y - my) * ddy : (my + 1.0 - camera.y) * ddy;
    int side = 0;
    for (int guard = 0; guard < 4 * (map.width + map.height); ++guard) {
      if (side_x < side_y) {
        side_x += ddx;
        mx += sx;
        side = 0;
      } else {
        side_y += ddy;
        my += sy;
        side = 1;
      }
      if (map.is_wall(mx, my)) break;
    }
    ColumnHit hit;
    hit.distance = side == 0 ? side_x - ddx : side_y - ddy;
    hit.texture = map.in_bounds(mx, my) ? map.at(mx, my) : texture::north;
    if (side == 0) {
      hit.face = dx > 0 ? detail::Face::west : detail::Face::east;
      const double wy = camera.y + hit.distance * dy;
      hit.u = wy - std::floor(wy);
    } else {
      hit.face = dy > 0 ? detail::Face::north : detail::Face::south;
      const double wx = camera.x + hit.distance * dx;
      hit.u = wx - std::floor(wx);
    }
    hits[static_cast<std::size_t>(c)] = hit;
  }
  return hits;
}

/// Renders RGB and the instance-id buffer from `camera`. Pure function.
inline Observation render(const TileMap& map, const std::vector<ObjectInstance>& objects,
                          const Pose& camera, const RenderOptions& opt = {}) {
  const auto hits = cast_columns(map, camera, opt);
  const int w = opt.width;
  const int h = opt.height;
  const double f = focal_length(opt);
  const double horizon = h / 2.0;

  std::vector<Rgb> px(static_cast<std::size_t>(w * h));
  Observation obs;
  obs.width = w;
  obs.height = h;
  obs.pose = camera;
  obs.instance_buffer.assign(static_cast<std::size_t>(w * h), 0);

  for (int r = 0; r < h; ++r) {
    const double t = std::abs(r + 0.5 - horizon) / horizon;
    const Rgb base = r + 0.5 < horizon ? Rgb{70, 80, 100} : Rgb{90, 75, 60};
    const double k = 0.6 + 0.4 * t;
    for (int c = 0; c < w; ++c) px[static_cast<std::size_t>(r * w + c)] = {base.r * k, base.g * k, base.b * k};
  }

  std::vector<double> zbuf(static_cast<std::size_t>(w));
  for (int c = 0; c < w; ++c) {
    const auto& hit = hits[static_cast<std::size_t>(c)];
    const double d = std::max(hit.distance, 1e-6);
    zbuf[static_cast<std::size_t>(c)] = d;
    const double top = horizon - f * 0.5 / d;
    const double bottom = horizon + f * 0.5 / d;
    const Rgb col = detail::wall_color(hit.texture, hit.face);
    const bool y_side = hit.face == detail::Face::north || hit.face == detail::Face::south;
    const double side_shade = y_side ? 0.85 : 1.0;
    const double fog = std::min(1.0, d / 24.0) * 0.35;
    const int r0 = std::max(0, static_cast<int>(std::floor(top)));
    const int r1 = std::min(h, static_cast<int>(std::ceil(bottom)));
    for (int r = r0; r < r1; ++r) {
      const double y = r + 0.5;
      if (y < top || y >= bottom) continue;
      const double v = (y - top) / (bottom - top);
      const double shade = side_shade * detail::wall_pattern(opt.texture_variant, hit.u, v) * (1.0 - fog);
      px[static_cast<std::size_t>(r * w + c)] = {col.r * shade + 80 * fog, col.g * shade + 80 * fog,
                                                 col.b * shade + 80 * fog};
    }
  }

  struct Placed {
    const ObjectInstance* obj;
    double depth;
    double lateral;
  };
  const double fx = std::cos(camera.yaw);
  const double fy = std::sin(camera.yaw);
  std::vector<Placed> placed;
  for (const auto& o : objects) {
    if (!o.alive) continue;
    const double dx = o.x - camera.x;
    const double dy = o.y - camera.y;
    const double depth = dx * fx + dy * fy;
    if (depth < 0.1) continue;
    placed.push_back({&o, depth, -dx * fy + dy * fx});
  }
  // Far to near so nearer sprites overwrite.
  std::stable_sort(placed.begin(), placed.end(),
                   [](const Placed& a, const Placed& b) { return a.depth > b.depth; });
  for (const auto& p : placed) {
    const auto size = detail::sprite_size(p.obj->kind);
    const double cx = w / 2.0 + f * p.lateral / p.depth;
    const double sw = f * size.width / p.depth;
    const double bottom = horizon + f * 0.5 / p.depth;
    const double top = bottom - f * size.height / p.depth;
    const double x0 = cx - sw / 2.0;
    const Rgb base = detail::object_color(p.obj->color);
    const int c0 = std::max(0, static_cast<int>(std::floor(x0)));
    const int c1 = std::min(w, static_cast<int>(std::ceil(x0 + sw)));
    const int r0 = std::max(0, static_cast<int>(std::floor(top)));
    const int r1 = std::min(h, static_cast<int>(std::ceil(bottom)));
    for (int c = c0; c < c1; ++c) {
      if (!(p.depth < zbuf[static_cast<std::size_t>(c)])) continue;
      const double u = (c + 0.5 - x0) / sw;
      if (u < 0.0 || u >= 1.0) continue;
      for (int r = r0; r < r1; ++r) {
        const double v = (r + 0.5 - top) / (bottom - top);
        if (v < 0.0 || v >= 1.0) continue;
        const double s = detail::sprite_shade(p.obj->kind, u, v);
        if (s <= 0.0) continue;
        const auto idx = static_cast<std::size_t>(r * w + c);
        px[idx] = {base.r * s, base.g * s, base.b * s};
        obs.instance_buffer[idx] = static_cast<std::uint32_t>(p.obj->instance_id);
      }
    }
  }

  obs.rgb.resize(static_cast<std::size_t>(w * h * 3));
  const auto& m = opt.color_matrix;
  const auto& off = opt.color_offset;
  for (std::size_t i = 0; i < px.size(); ++i) {
    const Rgb& p = px[i];
    obs.rgb[i * 3 + 0] = detail::to_byte(m[0] * p.r + m[1] * p.g + m[2] * p.b + off[0]);
    obs.rgb[i * 3 + 1] = detail::to_byte(m[3] * p.r + m[4] * p.g + m[5] * p.b + off[1]);
    obs.rgb[i * 3 + 2] = detail::to_byte(m[6] * p.r + m[7] * p.g + m[8] * p.b + off[2]);
  }
  return obs;
}

/// Binary mask selecting pixels whose instance id equals `instance_id`.
inline Mask mask_of(const Observation& obs, std::uint32_t instance_id) {
  Mask m(obs.height, obs.width);
  for (std::size_t i = 0; i < obs.instance_buffer.size(); ++i) {
    m.bits[i] = obs.instance_buffer[i] == instance_id ? 1 : 0;
  }
  return m;
}

}  // namespace xview::world
