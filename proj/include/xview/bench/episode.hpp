#pragma once

#include "xview/bench/suite.hpp"
#include "xview/datagen/expert.hpp"
#include "xview/runtime/session.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <memory>
#include <optional>
#include <random>

namespace xview::bench {

/// What an agent is told at the start of an episode. `target_id` is
/// privileged: only scripted agents and the benchmark goal refresh use it.
struct EpisodeSetup {
  const BenchTask* task = nullptr;
  const TaskInstance* instance = nullptr;
  policy::GoalSpec goal;
  std::uint64_t seed = 0;
};

class Agent {
 public:
  virtual ~Agent() = default;
  virtual void begin(const EpisodeSetup& setup) = 0;
  virtual world::Action act(const world::Observation& obs, const world::EpisodeState& state) = 0;
  /// Per-step diagnostics of the last act(), when the agent has them.
  virtual std::optional<runtime::Diagnostics> diagnostics() const { return std::nullopt; }
};

class IdleAgent final : public Agent {
 public:
  void begin(const EpisodeSetup&) override {}
  world::Action act(const world::Observation&, const world::EpisodeState&) override { return world::Action::null(); }
};

/// Uniformly random factored actions.
class RandomAgent final : public Agent {
 public:
  explicit RandomAgent(std::uint64_t seed, int turn_bins = world::kTurnBins) : seed_(seed), bins_(turn_bins) {}
  void begin(const EpisodeSetup& setup) override {
    rng_.seed(seed_ ^ (setup.seed * 0x9E3779B97F4A7C15ull) ^
              std::hash<std::string>{}(setup.task ? setup.task->task_id : std::string()));
  }
  world::Action act(const world::Observation&, const world::EpisodeState&) override {
    world::Action a;
    a.move = static_cast<world::MoveCommand>(std::uniform_int_distribution<int>(0, world::kMoveCount - 1)(rng_));
    a.interact = static_cast<world::InteractCommand>(std::uniform_int_distribution<int>(0, world::kInteractCount - 1)(rng_));
    a.turn = world::turn_for_bin(std::uniform_int_distribution<int>(0, bins_ - 1)(rng_), bins_);
    return a;
  }

 private:
  std::uint64_t seed_;
  int bins_;
  std::mt19937_64 rng_;
};

/// Noise-free scripted expert. With `inverted` it pursues the twin instead
/// of the target (judge sanity checks). It plans around the instance it is
/// not after so that passing by never counts as reaching it.
class ExpertAgent final : public Agent {
 public:
  explicit ExpertAgent(bool inverted = false) : inverted_(inverted) {}
  void begin(const EpisodeSetup& setup) override {
    task_.kind = setup.task->event;
    task_.target_instance = inverted_ ? setup.instance->twin_id : setup.instance->target_id;
    avoid_ = inverted_ ? setup.instance->target_id : setup.instance->twin_id;
  }
  world::Action act(const world::Observation&, const world::EpisodeState& state) override {
    const auto* target = state.find(task_.target_instance);
    if (target == nullptr || !target->alive) return world::Action::null();
    world::EpisodeState planning = state;
    if (const auto* other = state.find(avoid_); other != nullptr && other->alive) {
      // keep the whole neighbourhood clear, not only the tile itself
      const int px = static_cast<int>(std::floor(state.pose.x));
      const int py = static_cast<int>(std::floor(state.pose.y));
      for (int y = 0; y < planning.map.height; ++y) {
        for (int x = 0; x < planning.map.width; ++x) {
          if (x == px && y == py) continue;
          if (std::hypot(x + 0.5 - other->x, y + 0.5 - other->y) <= kAvoidRadius) {
            planning.map.at(x, y) = world::texture::clutter;
          }
        }
      }
    }
    bool unreachable = false;
    datagen::ExpertOptions opt;
    opt.epsilon = 0.0;
    auto a = datagen::detail::expert_action(planning, task_, *target, opt, unreachable);
    if (unreachable) a = datagen::detail::expert_action(state, task_, *target, opt, unreachable);
    return a.value_or(world::Action::null());
  }

 private:
  static constexpr double kAvoidRadius = 2.1;
  bool inverted_;
  int avoid_ = 0;
  datagen::ExpertTask task_;
};

/// The learned policy behind an AgentSession in benchmark mode.
class PolicyAgent final : public Agent {
 public:
  PolicyAgent(std::shared_ptr<const policy::Policy<float>> model, runtime::SessionOptions options)
      : session_(std::move(model), options) {}
  void begin(const EpisodeSetup& setup) override {
    session_.reset();
    session_.reseed(session_.options().seed ^ (setup.seed * 0xD1B54A32D192ED03ull));
    session_.set_goal(setup.goal);
    target_ = setup.instance->target_id;
  }
  world::Action act(const world::Observation& obs, const world::EpisodeState&) override {
    auto r = session_.act(obs, target_);
    last_ = r.diagnostics;
    return r.action;
  }
  std::optional<runtime::Diagnostics> diagnostics() const override { return last_; }
  runtime::AgentSession& session() { return session_; }

 private:
  runtime::AgentSession session_;
  int target_ = 0;
  std::optional<runtime::Diagnostics> last_;
};

struct TraceStep {
  int step = 0;
  world::Action action;
  std::optional<runtime::Diagnostics> diagnostics;
};

struct EpisodeResult {
  std::string task_id;
  std::uint64_t seed = 0;
  bool success = false;
  bool wrong_instance = false;
  int steps_used = 0;
  std::vector<TraceStep> trace;
};

inline nlohmann::json to_json(const EpisodeResult& r) {
  return {{"task_id", r.task_id},
          {"seed", r.seed},
          {"success", r.success},
          {"wrong_instance", r.wrong_instance},
          {"steps_used", r.steps_used}};
}

struct EpisodeOptions {
  world::RenderOptions render;  // observation and goal camera
  std::optional<int> max_steps;  // overrides the task's
  bool record_trace = false;
  /// Converts the agent's action before it reaches the simulator
  /// (alternate action encodings).
  std::function<world::Action(const world::Action&)> action_bridge;
  double min_spawn_distance = 4.0;
};

/// Runs one episode and judges it. Ends on success, on an interaction with
/// (or arrival at) a wrong instance, or when the step budget runs out.
inline EpisodeResult run_episode(const BenchTask& task, Agent& agent, std::uint64_t seed,
                                 const EpisodeOptions& options = {}) {
  const auto inst = instantiate(task, seed, options.min_spawn_distance);
  EpisodeSetup setup{&task, &inst, goal_for(task, inst, options.render), seed};
  const int budget = options.max_steps.value_or(task.max_steps);
  auto state = world::start_episode(inst.world, inst.spawn, budget, options.render);
  EpisodeResult r;
  r.task_id = task.task_id;
  r.seed = seed;
  agent.begin(setup);
  auto obs = state.observe();
  while (!state.done) {
    auto a = agent.act(obs, state);
    if (options.action_bridge) a = options.action_bridge(a);
    if (options.record_trace) r.trace.push_back({state.step_index, a, agent.diagnostics()});
    auto step = world::step(state, a);
    ++r.steps_used;
    if (task.judge == Judge::correct_instance) {
      for (const auto& e : step.events) {
        if (e.kind != task.event) continue;
        if (e.instance_id == inst.target_id) {
          r.success = true;
        } else {
          r.wrong_instance = true;
        }
        break;  // at most one interaction per tick
      }
    } else {
      auto near = [&](int id) {
        const auto* o = state.find(id);
        return o != nullptr && std::hypot(o->x - state.pose.x, o->y - state.pose.y) <= task.radius;
      };
      // Walking past the twin is not a choice; arriving facing it is.
      if (near(inst.target_id)) {
        r.success = true;
      } else if (near(inst.twin_id) && world::aimed_instance(state, task.radius) == inst.twin_id) {
        r.wrong_instance = true;
      }
    }
    if (r.success || r.wrong_instance) break;
    obs = std::move(step.observation);
  }
  return r;
}

}  // namespace xview::bench
