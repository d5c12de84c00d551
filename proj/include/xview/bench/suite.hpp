#pragma once

#include "xview/datagen/corpus.hpp"
#include "xview/error.hpp"
#include "xview/policy/goal_spec.hpp"
#include "xview/world/episode.hpp"
#include "xview/world/generate.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace xview::bench {

enum class Side : std::uint8_t { left, right };
enum class Judge : std::uint8_t { correct_instance, proximity };

inline std::string_view to_string(Side s) { return s == Side::left ? "left" : "right"; }
inline std::string_view to_string(Judge j) { return j == Judge::proximity ? "proximity" : "correct_instance"; }

struct DistractorInfo {
  world::ObjectKind kind = world::ObjectKind::block;
  bool same_appearance = false;  // same kind and colour as the target
};

struct BenchTask {
  std::string task_id;
  world::ObjectKind kind = world::ObjectKind::block;
  world::EventKind event = world::EventKind::break_;
  Side side = Side::left;
  Judge judge = Judge::correct_instance;
  double radius = 1.5;  // proximity judge only
  int max_steps = 256;
  std::uint64_t suite_seed = 0;
  std::string category;  // benchmark taxonomy label
};

struct SuiteConfig {
  std::uint64_t seed = 0;
  std::vector<world::ObjectKind> kinds{world::ObjectKind::creature, world::ObjectKind::block, world::ObjectKind::chest,
                                       world::ObjectKind::marker};
  int max_steps = 256;
  double approach_radius = 1.5;
  double min_spawn_distance = 4.0;
};

inline std::string_view kind_name(world::ObjectKind k) {
  switch (k) {
    case world::ObjectKind::block: return "block";
    case world::ObjectKind::creature: return "creature";
    case world::ObjectKind::chest: return "chest";
    case world::ObjectKind::marker: return "marker";
  }
  return "?";
}

inline world::ObjectKind kind_from(std::string_view s) {
  for (auto k : {world::ObjectKind::block, world::ObjectKind::creature, world::ObjectKind::chest,
                 world::ObjectKind::marker}) {
    if (kind_name(k) == s) return k;
  }
  throw ConfigError("unknown object kind: " + std::string(s));
}

inline std::string_view event_verb(world::EventKind e) {
  switch (e) {
    case world::EventKind::use: return "use";
    case world::EventKind::break_: return "break";
    case world::EventKind::approach: return "approach";
    case world::EventKind::attack: return "attack";
  }
  return "?";
}

/// Taxonomy label for each task kind (hunt, mine, interact, navigate).
inline std::string_view category_for(world::ObjectKind k) {
  switch (k) {
    case world::ObjectKind::creature: return "hunt";
    case world::ObjectKind::block: return "mine";
    case world::ObjectKind::chest: return "interact";
    case world::ObjectKind::marker: return "navigate";
  }
  return "?";
}

/// One task per (kind, side); 8 tasks for the default config.
inline std::vector<BenchTask> build_task_suite(const SuiteConfig& c = {}) {
  if (c.kinds.empty()) throw ConfigError("suite needs at least one kind");
  if (c.max_steps < 1) throw ConfigError("max_steps must be >= 1");
  std::vector<BenchTask> out;
  for (auto k : c.kinds) {
    for (auto side : {Side::left, Side::right}) {
      BenchTask t;
      t.kind = k;
      t.event = datagen::task_kind_for(k);
      t.side = side;
      t.judge = t.event == world::EventKind::approach ? Judge::proximity : Judge::correct_instance;
      t.radius = c.approach_radius;
      t.max_steps = c.max_steps;
      t.suite_seed = c.seed;
      t.category = std::string(category_for(k));
      t.task_id = std::string(event_verb(t.event)) + "_" + std::string(kind_name(k)) + "_" + std::string(to_string(side));
      out.push_back(t);
    }
  }
  return out;
}

inline nlohmann::json to_json(const SuiteConfig& c) {
  nlohmann::json kinds = nlohmann::json::array();
  for (auto k : c.kinds) kinds.push_back(std::string(kind_name(k)));
  return {{"seed", c.seed},
          {"kinds", kinds},
          {"max_steps", c.max_steps},
          {"approach_radius", c.approach_radius},
          {"min_spawn_distance", c.min_spawn_distance}};
}

inline SuiteConfig suite_config_from_json(const nlohmann::json& j) {
  SuiteConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    if (j.contains("kinds")) {
      c.kinds.clear();
      for (const auto& k : j.at("kinds")) c.kinds.push_back(kind_from(k.get<std::string>()));
    }
    c.max_steps = j.value("max_steps", c.max_steps);
    c.approach_radius = j.value("approach_radius", c.approach_radius);
    c.min_spawn_distance = j.value("min_spawn_distance", c.min_spawn_distance);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("suite config: ") + e.what());
  }
  return c;
}

inline SuiteConfig load_suite_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open suite config " + path);
  try {
    return suite_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("suite config parse error: ") + e.what());
  }
}

/// A task materialised for one seed: the world, the agent's spawn, the
/// instance ids, and the pose of the goal camera.
struct TaskInstance {
  world::GeneratedWorld world;
  world::Pose spawn;
  world::Pose goal_camera;
  int target_id = 0;
  int twin_id = 0;  // the same-appearance distractor
  std::vector<DistractorInfo> distractors;
};

/// Seed of the world shared by the left and right variants of a task.
inline std::uint64_t world_seed(const BenchTask& t, std::uint64_t episode_seed) {
  return (t.suite_seed * 0x9E3779B97F4A7C15ull) ^ (episode_seed * 0xBF58476D1CE4E5B9ull) ^
         (static_cast<std::uint64_t>(t.kind) + 1) * 0x94D049BB133111EBull;
}

/// Cross-view rule for goal cameras: at least 90 degrees of heading or
/// 4 tiles of position away from the spawn pose.
inline bool is_cross_view(const world::Pose& goal, const world::Pose& spawn) {
  return std::abs(world::angle_diff(goal.yaw, spawn.yaw)) >= std::numbers::pi / 2.0 ||
         std::hypot(goal.x - spawn.x, goal.y - spawn.y) >= 4.0;
}

namespace detail {

inline double pixels_of(const world::Observation& obs, int id) {
  return static_cast<double>(world::mask_of(obs, static_cast<std::uint32_t>(id)).count());
}

}  // namespace detail

inline TaskInstance instantiate(const BenchTask& task, std::uint64_t episode_seed, double min_spawn_distance = 4.0) {
  const std::uint64_t seed = world_seed(task, episode_seed);
  std::mt19937_64 rng(seed);
  auto pick = [&rng](int n) { return static_cast<int>(rng() % static_cast<std::uint64_t>(n)); };
  world::WorldConfig c;
  c.seed = seed;
  c.layout = world::Layout::mirrored;
  c.twin_offset = 2 + pick(2);
  c.clutter = pick(4);
  const auto color = static_cast<world::ColorTag>(pick(5));
  c.roster.push_back({task.kind, color, 2});
  const int extras = 2 + pick(3);
  for (int i = 0; i < extras; ++i) {
    auto kind = static_cast<world::ObjectKind>(pick(4));
    auto col = static_cast<world::ColorTag>(pick(5));
    if (kind == task.kind && col == color) col = static_cast<world::ColorTag>((static_cast<int>(col) + 1) % 5);
    c.roster.push_back({kind, col, 1});
  }
  TaskInstance inst;
  inst.world = world::generate_world(rng(), c);
  // the twin pair is placed first: id 1 on the left, id 2 on the right
  const int left = 1;
  const int right = 2;
  inst.target_id = task.side == Side::left ? left : right;
  inst.twin_id = task.side == Side::left ? right : left;
  for (const auto& o : inst.world.objects) {
    if (o.instance_id == inst.target_id) continue;
    inst.distractors.push_back({o.kind, o.instance_id == inst.twin_id});
  }
  const auto& objs = inst.world.objects;
  auto obj = [&](int id) -> const world::ObjectInstance& {
    return *std::find_if(objs.begin(), objs.end(), [id](const auto& o) { return o.instance_id == id; });
  };
  const auto& a = obj(left);
  const auto& b = obj(right);

  // Spawn depends only on the shared world so both sides start identically.
  const auto tiles = world::free_spawn_tiles(inst.world);
  std::vector<world::Tile> spawn_tiles;
  for (const auto& t : tiles) {
    const double cx = t.x + 0.5;
    const double cy = t.y + 0.5;
    if (std::hypot(cx - a.x, cy - a.y) >= min_spawn_distance && std::hypot(cx - b.x, cy - b.y) >= min_spawn_distance) {
      spawn_tiles.push_back(t);
    }
  }
  if (spawn_tiles.empty()) throw CapacityError("no spawn tile far enough from the twins");
  const auto st = spawn_tiles[static_cast<std::size_t>(pick(static_cast<int>(spawn_tiles.size())))];
  inst.spawn = {st.x + 0.5, st.y + 0.5, std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng)};

  // Goal camera: near the target, facing it, with the target in view.
  const auto& target = obj(inst.target_id);
  std::mt19937_64 cam_rng(seed ^ (task.side == Side::left ? 0x1234567ull : 0x7654321ull));
  std::vector<world::Pose> candidates;
  for (const auto& t : tiles) {
    const double cx = t.x + 0.5;
    const double cy = t.y + 0.5;
    const double d = std::hypot(cx - target.x, cy - target.y);
    if (d < 1.5 || d > 5.0) continue;
    if (!world::line_of_sight(inst.world.map, cx, cy, target.x, target.y)) continue;
    world::Pose p{cx, cy, std::atan2(target.y - cy, target.x - cx)};
    if (!is_cross_view(p, inst.spawn)) continue;
    candidates.push_back(p);
  }
  std::shuffle(candidates.begin(), candidates.end(), cam_rng);
  double best = 0.0;
  for (const auto& p : candidates) {
    const auto obs = world::render(inst.world.map, inst.world.objects, p);
    const double px = detail::pixels_of(obs, inst.target_id);
    if (px >= 12.0) {
      inst.goal_camera = p;
      best = px;
      break;
    }
    if (px > best) {
      best = px;
      inst.goal_camera = p;
    }
  }
  if (best <= 0.0) throw CapacityError("no goal camera pose sees the target");
  return inst;
}

/// The goal view as rendered by the goal camera with `options`.
inline policy::GoalSpec goal_for(const BenchTask& task, const TaskInstance& inst,
                                 const world::RenderOptions& options = {}) {
  const auto obs = world::render(inst.world.map, inst.world.objects, inst.goal_camera, options);
  auto mask = world::mask_of(obs, static_cast<std::uint32_t>(inst.target_id));
  if (mask.empty()) throw InvalidGoalError("target not visible from the goal camera at this resolution");
  return policy::make_goal(obs, std::move(mask), task.event);
}

}  // namespace xview::bench
