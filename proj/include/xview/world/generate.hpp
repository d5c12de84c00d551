#pragma once

#include "xview/world/types.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace xview::world {

enum class Layout : std::uint8_t { open, mirrored, walled_off };

namespace texture {
inline constexpr std::uint8_t west = 1;
inline constexpr std::uint8_t east = 2;
inline constexpr std::uint8_t north = 3;
inline constexpr std::uint8_t south = 4;
inline constexpr std::uint8_t pillar = 5;
inline constexpr std::uint8_t clutter = 6;
}  // namespace texture

struct RosterEntry {
  ObjectKind kind = ObjectKind::block;
  ColorTag color = ColorTag::red;
  int count = 1;
};

/// `mirrored` puts a two-tile pillar at the map centre and the first roster
/// entry with count >= 2 on either side of it, `twin_offset` tiles away.
/// `walled_off` encloses instance 1 in a sealed pocket.
struct WorldConfig {
  std::uint64_t seed = 0;
  int width = 16;
  int height = 16;
  Layout layout = Layout::open;
  std::vector<RosterEntry> roster;
  int clutter = 0;
  int twin_offset = 2;
};

inline std::string_view to_string(Layout l) {
  switch (l) {
    case Layout::open: return "open";
    case Layout::mirrored: return "mirrored";
    case Layout::walled_off: return "walled_off";
  }
  return "?";
}

inline Layout layout_from(std::string_view s) {
  if (s == "open") return Layout::open;
  if (s == "mirrored") return Layout::mirrored;
  if (s == "walled_off") return Layout::walled_off;
  throw ConfigError("unknown layout: " + std::string(s));
}

inline nlohmann::json to_json(const WorldConfig& c) {
  nlohmann::json roster = nlohmann::json::array();
  for (const auto& r : c.roster) {
    roster.push_back({{"kind", to_string(r.kind)}, {"color", to_string(r.color)}, {"count", r.count}});
  }
  return {{"seed", c.seed},          {"width", c.width},     {"height", c.height},
          {"layout", to_string(c.layout)}, {"roster", roster}, {"clutter", c.clutter},
          {"twin_offset", c.twin_offset}};
}

inline WorldConfig world_config_from_json(const nlohmann::json& j) {
  WorldConfig c;
  try {
    c.seed = j.value("seed", std::uint64_t{0});
    c.width = j.value("width", 16);
    c.height = j.value("height", 16);
    c.layout = layout_from(j.value("layout", std::string("open")));
    c.clutter = j.value("clutter", 0);
    c.twin_offset = j.value("twin_offset", 2);
    if (j.contains("roster")) {
      for (const auto& r : j.at("roster")) {
        c.roster.push_back({object_kind_from(r.at("kind").get<std::string>()),
                            color_from(r.at("color").get<std::string>()), r.value("count", 1)});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("world config: ") + e.what());
  }
  if (c.width < 8 || c.height < 8) throw ConfigError("world config: width and height must be >= 8");
  return c;
}

inline WorldConfig load_world_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open world config: " + path);
  try {
    return world_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("world config parse error: ") + e.what());
  }
}

struct GeneratedWorld {
  TileMap map;
  std::vector<ObjectInstance> objects;
  friend bool operator==(const GeneratedWorld&, const GeneratedWorld&) = default;
};

namespace detail {

inline std::vector<Tile> flood_floor(const TileMap& map, Tile start) {
  std::vector<Tile> out;
  if (map.is_wall(start.x, start.y)) return out;
  std::vector<std::uint8_t> seen(map.cells.size(), 0);
  std::queue<Tile> q;
  q.push(start);
  seen[static_cast<std::size_t>(start.y * map.width + start.x)] = 1;
  while (!q.empty()) {
    const Tile t = q.front();
    q.pop();
    out.push_back(t);
    const int dx[4] = {1, -1, 0, 0};
    const int dy[4] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      const int nx = t.x + dx[k];
      const int ny = t.y + dy[k];
      if (map.is_wall(nx, ny)) continue;
      auto& s = seen[static_cast<std::size_t>(ny * map.width + nx)];
      if (s) continue;
      s = 1;
      q.push({nx, ny});
    }
  }
  return out;
}

inline std::size_t floor_count(const TileMap& map) {
  return static_cast<std::size_t>(std::count(map.cells.begin(), map.cells.end(), 0));
}

}  // namespace detail

/// Builds a bordered room populated per `config`. Deterministic in
/// (seed, config).
inline GeneratedWorld generate_world(std::uint64_t seed, const WorldConfig& config) {
  if (config.width < 8 || config.height < 8) throw ConfigError("map must be at least 8x8");
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + 0x5851F42D4C957F2Dull);
  auto uniform = [&rng](int lo, int hi) {  // inclusive
    return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
  };

  GeneratedWorld w;
  TileMap& map = w.map;
  map.width = config.width;
  map.height = config.height;
  map.cells.assign(static_cast<std::size_t>(map.width * map.height), 0);
  for (int x = 0; x < map.width; ++x) {
    map.at(x, 0) = texture::north;
    map.at(x, map.height - 1) = texture::south;
  }
  for (int y = 1; y < map.height - 1; ++y) {
    map.at(0, y) = texture::west;
    map.at(map.width - 1, y) = texture::east;
  }

  std::set<std::pair<int, int>> reserved;  // tiles kept free of clutter
  std::vector<std::pair<Tile, std::size_t>> fixed;  // preplaced tile -> roster index
  auto reserve_around = [&](Tile t, int r) {
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) reserved.insert({t.x + dx, t.y + dy});
  };

  int total = 0;
  for (const auto& r : config.roster) {
    if (r.count < 0) throw ConfigError("negative roster count");
    total += r.count;
  }

  std::size_t twin_entry = config.roster.size();
  if (config.layout == Layout::mirrored) {
    for (std::size_t i = 0; i < config.roster.size(); ++i) {
      if (config.roster[i].count >= 2) {
        twin_entry = i;
        break;
      }
    }
    if (twin_entry == config.roster.size()) {
      throw ConfigError("mirrored layout needs a roster entry with count >= 2");
    }
    const int cy = map.height / 2;
    const int left_pillar = map.width / 2 - 1;
    const int off = std::max(1, config.twin_offset);
    const Tile twin_l{left_pillar - off, cy};
    const Tile twin_r{left_pillar + 1 + off, cy};
    if (twin_l.x < 1 || twin_r.x > map.width - 2) throw CapacityError("twin offset too large for map");
    map.at(left_pillar, cy) = texture::pillar;
    map.at(left_pillar + 1, cy) = texture::pillar;
    fixed.push_back({twin_l, twin_entry});
    fixed.push_back({twin_r, twin_entry});
    reserve_around({left_pillar, cy}, 1);
    reserve_around({left_pillar + 1, cy}, 1);
    reserve_around(twin_l, 1);
    reserve_around(twin_r, 1);
  }

  Tile pocket{-1, -1};
  if (config.layout == Layout::walled_off) {
    if (config.roster.empty() || config.roster.front().count < 1) {
      throw ConfigError("walled_off layout needs at least one instance");
    }
    pocket = {uniform(2, map.width - 3), uniform(2, map.height - 3)};
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx)
        if (dx != 0 || dy != 0) map.at(pocket.x + dx, pocket.y + dy) = texture::clutter;
    fixed.insert(fixed.begin(), {pocket, 0});
    reserve_around(pocket, 2);
  }

  const Tile anchor = [&] {
    for (int y = 1; y < map.height - 1; ++y)
      for (int x = 1; x < map.width - 1; ++x)
        if (!map.is_wall(x, y) && !reserved.count({x, y}) && !(Tile{x, y} == pocket)) return Tile{x, y};
    return Tile{1, 1};
  }();

  for (int k = 0; k < config.clutter; ++k) {
    for (int attempt = 0; attempt < 20; ++attempt) {
      const Tile t{uniform(1, map.width - 2), uniform(1, map.height - 2)};
      if (map.is_wall(t.x, t.y) || reserved.count({t.x, t.y}) || t == anchor) continue;
      const std::size_t before = detail::flood_floor(map, anchor).size();
      map.at(t.x, t.y) = texture::clutter;
      if (detail::flood_floor(map, anchor).size() + 1 != before) {
        map.at(t.x, t.y) = 0;
        continue;
      }
      break;
    }
  }

  map.spawnable = detail::flood_floor(map, anchor);
  std::sort(map.spawnable.begin(), map.spawnable.end(),
            [](const Tile& a, const Tile& b) { return a.y != b.y ? a.y < b.y : a.x < b.x; });
  const std::size_t capacity = map.spawnable.size() + (pocket.x >= 0 ? 1 : 0);
  if (static_cast<std::size_t>(total) > capacity) {
    throw CapacityError("roster requests " + std::to_string(total) + " instances but only " +
                        std::to_string(capacity) + " tiles are spawnable");
  }

  std::set<std::pair<int, int>> occupied;
  std::vector<int> remaining;
  for (const auto& r : config.roster) remaining.push_back(r.count);
  int next_id = 1;
  auto place = [&](Tile t, std::size_t entry) {
    const auto& r = config.roster[entry];
    w.objects.push_back({next_id++, r.kind, r.color, t.x + 0.5, t.y + 0.5, true});
    occupied.insert({t.x, t.y});
    --remaining[entry];
  };
  for (const auto& [t, entry] : fixed) place(t, entry);

  std::vector<Tile> free_tiles;
  for (const auto& t : map.spawnable) {
    if (!occupied.count({t.x, t.y}) && !reserved.count({t.x, t.y})) free_tiles.push_back(t);
  }
  std::shuffle(free_tiles.begin(), free_tiles.end(), rng);
  // Fall back to reserved-but-free tiles only when the open area runs out.
  for (const auto& t : map.spawnable) {
    if (!occupied.count({t.x, t.y}) && reserved.count({t.x, t.y})) free_tiles.push_back(t);
  }
  std::size_t cursor = 0;
  for (std::size_t e = 0; e < config.roster.size(); ++e) {
    while (remaining[e] > 0) {
      if (cursor >= free_tiles.size()) throw CapacityError("ran out of spawnable tiles");
      place(free_tiles[cursor++], e);
    }
  }
  return w;
}

/// Tiles in the spawnable region not occupied by any instance.
inline std::vector<Tile> free_spawn_tiles(const GeneratedWorld& w) {
  std::vector<Tile> out;
  for (const auto& t : w.map.spawnable) {
    bool taken = false;
    for (const auto& o : w.objects) taken = taken || o.tile() == t;
    if (!taken) out.push_back(t);
  }
  return out;
}

}  // namespace xview::world
