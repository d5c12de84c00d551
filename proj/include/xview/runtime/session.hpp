#pragma once

#include "xview/image.hpp"
#include "xview/policy/model.hpp"
#include "xview/training/centroid.hpp"
#include "xview/world/render.hpp"

#include <cmath>
#include <memory>
#include <optional>
#include <random>
#include <sstream>

namespace xview::runtime {

enum class SamplingMode : std::uint8_t { greedy, categorical };

struct Sampling {
  SamplingMode mode = SamplingMode::categorical;
  double temperature = 1.0;
};

struct SessionOptions {
  std::optional<int> goal_reset_period;  // benchmark mode only
  Sampling sampling;
  std::uint64_t seed = 0;
};

/// Benchmark-mode defaults: goal refresh every 90 steps, categorical sampling.
inline SessionOptions benchmark_options(std::uint64_t seed) {
  SessionOptions o;
  o.goal_reset_period = 90;
  o.seed = seed;
  return o;
}

struct Diagnostics {
  int centroid_cell = 0;
  training::PixelPoint centroid_pixel;  // 1-indexed, policy resolution
  double visibility_prob = 0.0;
  bool goal_refreshed = false;
};

/// Raw per-head logits of one step.
struct StepLogits {
  std::vector<float> move;
  std::vector<float> interact;
  std::vector<float> turn;
  std::vector<float> centroid;
  float visibility = 0.0f;
};

struct ActResult {
  world::Action action;
  Diagnostics diagnostics;
  StepLogits logits;
};

/// Resizes an observation's RGB to the policy's square input resolution.
inline std::vector<std::uint8_t> to_policy_rgb(const std::vector<std::uint8_t>& rgb, int height, int width,
                                               int size) {
  if (height == size && width == size) return rgb;
  Image img(height, width, 3);
  img.data = rgb;
  return resize_bilinear(img, size, size).data;
}

inline world::Mask to_policy_mask(const world::Mask& m, int size) {
  if (m.height == size && m.width == size) return m;
  world::Mask out(size, size);
  out.bits = resize_nearest(m.bits, m.height, m.width, size, size);
  return out;
}

/// Brings a goal captured at any resolution to the policy resolution.
inline policy::GoalSpec to_policy_goal(const policy::GoalSpec& g, int size) {
  policy::GoalSpec out;
  out.height = size;
  out.width = size;
  out.goal_view = to_policy_rgb(g.goal_view, g.height, g.width, size);
  out.goal_mask = to_policy_mask(g.goal_mask, size);
  out.event = g.event;
  return out;
}

/// Session state that can be saved and restored.
struct SessionSnapshot {
  policy::MemoryCache<float> memory;
  std::optional<policy::GoalSpec> goal;
  world::Action prev_action;
  int step_count = 0;
  std::string rng_state;
};

/// One live episode driven by a policy: memory, goal lifecycle, sampling.
class AgentSession {
 public:
  using Model = policy::Policy<float>;

  AgentSession(std::shared_ptr<const Model> model, SessionOptions options = {})
      : model_(std::move(model)), options_(options), rng_(options.seed) {
    if (!model_) throw StateError("session needs a model");
    if (options_.goal_reset_period && *options_.goal_reset_period < 1) {
      throw ConfigError("goal_reset_period must be >= 1");
    }
    memory_ = model_->new_memory();
  }

  /// Installs a goal. Temporal memory is kept.
  void set_goal(const policy::GoalSpec& goal) {
    if (goal.goal_mask.empty()) throw InvalidGoalError("goal mask is empty");
    if (goal.goal_mask.height != goal.height || goal.goal_mask.width != goal.width ||
        goal.goal_view.size() != static_cast<std::size_t>(goal.height * goal.width * 3)) {
      throw InvalidGoalError("goal view and mask sizes disagree");
    }
    auto g = to_policy_goal(goal, model_->config().image_size);
    if (g.goal_mask.empty()) throw InvalidGoalError("goal mask vanished after resizing");
    nn::NoGradGuard guard;
    goal_tokens_ = model_->encode_goal(g).value();
    goal_ = std::move(g);
  }

  /// One policy step on `obs`. In benchmark mode `privileged_target` names
  /// the target instance so the goal can be refreshed from ground truth.
  ActResult act(const world::Observation& obs, std::optional<int> privileged_target = std::nullopt) {
    if (!goal_) throw ProtocolError("act() called before set_goal()");
    const int size = model_->config().image_size;
    ActResult result;
    if (options_.goal_reset_period && privileged_target && step_count_ > 0 &&
        step_count_ % *options_.goal_reset_period == 0) {
      const auto mask = world::mask_of(obs, static_cast<std::uint32_t>(*privileged_target));
      if (!mask.empty()) {
        set_goal(policy::make_goal(obs, mask, goal_->event));
        result.diagnostics.goal_refreshed = true;
      }
    }
    const auto rgb = to_policy_rgb(obs.rgb, obs.height, obs.width, size);
    nn::NoGradGuard guard;
    const auto out = model_->step(rgb, prev_action_, goal_->event, nn::constant(goal_tokens_), memory_);
    auto row = [](const nn::Var<float>& v) {
      return std::vector<float>(v.value().data(), v.value().data() + v.value().size());
    };
    result.logits = {row(out.move), row(out.interact), row(out.turn), row(out.centroid), out.visibility.item()};
    world::Action a;
    a.move = static_cast<world::MoveCommand>(choose(result.logits.move));
    a.interact = static_cast<world::InteractCommand>(choose(result.logits.interact));
    a.turn = world::turn_for_bin(choose(result.logits.turn), model_->config().turn_bins);
    result.action = a;
    const auto& cen = result.logits.centroid;
    result.diagnostics.centroid_cell =
        static_cast<int>(std::max_element(cen.begin(), cen.end()) - cen.begin());
    result.diagnostics.centroid_pixel =
        training::cell_center(result.diagnostics.centroid_cell, model_->config().patch_size, size);
    result.diagnostics.visibility_prob = 1.0 / (1.0 + std::exp(-static_cast<double>(result.logits.visibility)));
    prev_action_ = a;
    ++step_count_;
    return result;
  }

  /// Clears memory, goal, previous action and the step counter.
  void reset() {
    memory_ = model_->new_memory();
    goal_.reset();
    goal_tokens_.resize(0, 0);
    prev_action_ = world::Action::null();
    step_count_ = 0;
  }

  void reseed(std::uint64_t seed) { rng_.seed(seed); }

  SessionSnapshot snapshot() const {
    std::ostringstream rng;
    rng << rng_;
    return {memory_, goal_, prev_action_, step_count_, rng.str()};
  }

  void restore(const SessionSnapshot& s) {
    memory_ = s.memory;
    prev_action_ = s.prev_action;
    step_count_ = s.step_count;
    std::istringstream rng(s.rng_state);
    rng >> rng_;
    if (s.goal) {
      set_goal(*s.goal);
    } else {
      goal_.reset();
      goal_tokens_.resize(0, 0);
    }
  }

  const policy::MemoryCache<float>& memory() const { return memory_; }
  const std::optional<policy::GoalSpec>& goal() const { return goal_; }
  const nn::Matrix<float>& goal_tokens() const { return goal_tokens_; }
  const world::Action& prev_action() const { return prev_action_; }
  int step_count() const { return step_count_; }
  const SessionOptions& options() const { return options_; }
  const Model& model() const { return *model_; }

 private:
  int choose(const std::vector<float>& logits) {
    if (options_.sampling.mode == SamplingMode::greedy || options_.sampling.temperature <= 0.0) {
      return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    }
    const double t = options_.sampling.temperature;
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> w;
    for (float l : logits) w.push_back(std::exp((l - m) / t));
    std::discrete_distribution<int> dist(w.begin(), w.end());
    return dist(rng_);
  }

  std::shared_ptr<const Model> model_;
  SessionOptions options_;
  std::mt19937_64 rng_;
  policy::MemoryCache<float> memory_;
  std::optional<policy::GoalSpec> goal_;
  nn::Matrix<float> goal_tokens_;
  world::Action prev_action_ = world::Action::null();
  int step_count_ = 0;
};

}  // namespace xview::runtime
