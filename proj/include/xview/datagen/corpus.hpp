#pragma once

#include "xview/datagen/expert.hpp"
#include "xview/datagen/relabel.hpp"
#include "xview/world/episode.hpp"

#include <random>
#include <string>
#include <vector>

namespace xview::datagen {

struct CorpusOptions {
  std::uint64_t seed = 0;
  int episodes = 100;
  int max_tasks = 3;
  int max_track_length = kMaxTrackLength;
  double approach_threshold = kApproachThreshold;
  int approach_window = kApproachWindow;
  int episode_steps = 512;
  double twin_task_probability = 0.6;
  double far_approach_distance = 9.0;  // spawn distance for opening approach tasks
  ExpertOptions expert;
};

/// Event kind an expert performs on an object of the given kind.
inline world::EventKind task_kind_for(world::ObjectKind k) {
  switch (k) {
    case world::ObjectKind::creature: return world::EventKind::attack;
    case world::ObjectKind::block: return world::EventKind::break_;
    case world::ObjectKind::chest: return world::EventKind::use;
    case world::ObjectKind::marker: return world::EventKind::approach;
  }
  return world::EventKind::use;
}

struct EpisodePlan {
  world::WorldConfig world;
  world::GeneratedWorld generated;
  world::Pose spawn;
  std::vector<ExpertTask> tasks;
};

/// Random mirrored room with a twin pair plus distractors, a spawn pose and
/// one to `max_tasks` expert tasks biased towards the twins.
inline EpisodePlan plan_episode(std::uint64_t seed, const CorpusOptions& opt) {
  std::mt19937_64 rng(seed * 0xA24BAED4963EE407ull + 0x9FB21C651E98DF25ull);
  auto pick = [&rng](int n) { return static_cast<int>(rng() % static_cast<std::uint64_t>(n)); };
  EpisodePlan plan;
  auto& c = plan.world;
  c.seed = seed;
  c.layout = world::Layout::mirrored;
  c.twin_offset = 2 + pick(2);
  c.clutter = pick(5);
  const auto twin_kind = static_cast<world::ObjectKind>(pick(4));
  const auto twin_color = static_cast<world::ColorTag>(pick(5));
  c.roster.push_back({twin_kind, twin_color, 2});
  const int extras = 2 + pick(3);
  for (int i = 0; i < extras; ++i) {
    auto kind = static_cast<world::ObjectKind>(pick(4));
    auto color = static_cast<world::ColorTag>(pick(5));
    if (kind == twin_kind && color == twin_color) color = static_cast<world::ColorTag>((static_cast<int>(color) + 1) % 5);
    c.roster.push_back({kind, color, 1});
  }
  plan.generated = world::generate_world(rng(), c);
  const auto& objs = plan.generated.objects;

  const int n_tasks = 1 + pick(std::max(1, opt.max_tasks));
  std::bernoulli_distribution twin(opt.twin_task_probability);
  std::vector<int> used;
  for (int k = 0; k < n_tasks; ++k) {
    int index = 0;
    for (int attempt = 0; attempt < 10; ++attempt) {
      index = twin(rng) ? pick(2) : 2 + pick(static_cast<int>(objs.size()) - 2);
      if (std::find(used.begin(), used.end(), index) == used.end()) break;
    }
    if (std::find(used.begin(), used.end(), index) != used.end()) continue;
    used.push_back(index);
    const auto& o = objs[static_cast<std::size_t>(index)];
    plan.tasks.push_back({task_kind_for(o.kind), o.instance_id});
  }

  auto tiles = world::free_spawn_tiles(plan.generated);
  std::vector<world::Tile> candidates;
  const auto& first = *std::find_if(objs.begin(), objs.end(),
                                    [&](const auto& o) { return o.instance_id == plan.tasks.front().target_instance; });
  const double min_distance = plan.tasks.front().kind == world::EventKind::approach ? opt.far_approach_distance : 3.0;
  for (const auto& t : tiles) {
    if (std::hypot(t.x + 0.5 - first.x, t.y + 0.5 - first.y) >= min_distance) candidates.push_back(t);
  }
  if (candidates.empty()) candidates = tiles;
  const auto tile = candidates[static_cast<std::size_t>(pick(static_cast<int>(candidates.size())))];
  const double yaw = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
  plan.spawn = {tile.x + 0.5, tile.y + 0.5, yaw};
  return plan;
}

/// Runs the plan's tasks back to back in one episode.
inline RawTrajectory run_plan(const EpisodePlan& plan, std::uint64_t seed, const CorpusOptions& opt,
                              int episode_id = 0) {
  auto state = world::start_episode(plan.generated, plan.spawn, opt.episode_steps);
  std::mt19937_64 rng(seed);
  RawTrajectory traj;
  traj.episode_id = episode_id;
  for (const auto& task : plan.tasks) {
    if (state.done) break;
    const auto outcome = run_expert_task(state, task, rng, opt.expert, traj);
    if (!outcome.success) {
      traj.failed = true;
      traj.failure = outcome.failure;
    }
  }
  if (traj.observations.empty()) {
    traj.observations.push_back(state.observe());
    traj.actions.push_back(world::Action::null());
  }
  return traj;
}

/// Full pipeline for one episode: plan, expert rollout, approach detection.
inline RawTrajectory generate_trajectory(std::uint64_t seed, int episode_id, const CorpusOptions& opt) {
  const auto plan = plan_episode(seed, opt);
  return with_approach_events(run_plan(plan, seed ^ 0x5DEECE66Dull, opt, episode_id), opt.approach_threshold,
                              opt.approach_window);
}

inline std::uint64_t episode_seed(std::uint64_t corpus_seed, int episode) {
  return corpus_seed * 1000003ull + static_cast<std::uint64_t>(episode);
}

/// Generates `episodes` trajectories and relabels them into clips.
inline std::vector<TrajectoryClip> generate_corpus(const CorpusOptions& opt,
                                                   std::vector<std::string>* warnings = nullptr) {
  std::vector<TrajectoryClip> clips;
  for (int e = 0; e < opt.episodes; ++e) {
    const auto traj = generate_trajectory(episode_seed(opt.seed, e), e, opt);
    for (auto& clip : relabel_backward(traj, opt.max_track_length, warnings)) clips.push_back(std::move(clip));
  }
  return clips;
}

}  // namespace xview::datagen
