#pragma once

#include "xview/datagen/goal.hpp"
#include "xview/datagen/shard.hpp"
#include "xview/nn/adam.hpp"
#include "xview/policy/checkpoint.hpp"
#include "xview/training/loss.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <vector>

namespace xview::training {

/// Clip stripped down to what training reads: pixels, masks, targets.
struct TrainingClip {
  world::EventKind event = world::EventKind::use;
  int target_instance = 0;
  std::vector<std::vector<std::uint8_t>> rgb;
  std::vector<world::Mask> masks;
  std::vector<world::Action> actions;
  std::vector<FrameTarget> targets;
  std::vector<int> visible;

  int length() const { return static_cast<int>(rgb.size()); }
};

inline TrainingClip compact_clip(const datagen::TrajectoryClip& clip, const policy::ModelConfig& c) {
  if (clip.frames.empty()) throw InvalidClipError("clip has no frames");
  TrainingClip t;
  t.event = clip.event_kind;
  t.target_instance = clip.target_instance;
  for (std::size_t i = 0; i < clip.frames.size(); ++i) {
    const auto& f = clip.frames[i];
    if (f.observation.height != c.image_size || f.observation.width != c.image_size) {
      throw nn::ShapeError("clip frames are not at policy resolution");
    }
    t.rgb.push_back(f.observation.rgb);
    t.masks.push_back(f.label.mask);
    t.actions.push_back(f.action);
    t.targets.push_back(frame_target(f, c.patch_size, c.image_size, c.turn_bins));
    if (f.label.visible) t.visible.push_back(static_cast<int>(i));
  }
  if (t.visible.empty()) throw InvalidClipError("clip has no visible frame");
  return t;
}

inline std::vector<TrainingClip> compact_clips(const std::vector<datagen::TrajectoryClip>& clips,
                                               const policy::ModelConfig& c) {
  std::vector<TrainingClip> out;
  out.reserve(clips.size());
  for (const auto& clip : clips) out.push_back(compact_clip(clip, c));
  return out;
}

/// Reads every shard and keeps only the training view of its clips.
inline std::vector<TrainingClip> load_training_clips(const std::vector<std::string>& shard_paths,
                                                     const policy::ModelConfig& c) {
  std::vector<TrainingClip> out;
  for (const auto& path : shard_paths) {
    const auto shard = datagen::read_shard(path);
    for (const auto& clip : shard.clips) out.push_back(compact_clip(clip, c));
  }
  return out;
}

inline policy::GoalSpec goal_from_frame(const TrainingClip& clip, int frame, int size) {
  policy::GoalSpec g;
  g.height = size;
  g.width = size;
  g.goal_view = clip.rgb[static_cast<std::size_t>(frame)];
  g.goal_mask = clip.masks[static_cast<std::size_t>(frame)];
  g.event = clip.event;
  return g;
}

/// Previous-action inputs for frames [begin, begin + count): the null
/// action before the clip's first frame.
inline std::vector<world::Action> previous_actions(const TrainingClip& clip, int begin, int count) {
  std::vector<world::Action> out;
  for (int t = begin; t < begin + count; ++t) {
    out.push_back(t == 0 ? world::Action::null() : clip.actions[static_cast<std::size_t>(t - 1)]);
  }
  return out;
}

struct TrainConfig {
  int chunk_length = 32;
  int batch_size = 4;  // concurrent clips per step
  double learning_rate = 4e-4;
  int max_steps = 1000;
  Ablation ablation = Ablation::full;
  std::uint64_t seed = 0;
  std::optional<int> freeze_view_encoder_after;
  LossWeights weights;
  double clip_norm = 1.0;
  double weight_decay = 0.0;

  void validate(const policy::ModelConfig& model) const {
    if (chunk_length < 1 || chunk_length > model.memory) throw ConfigError("chunk_length must be in [1, memory]");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j{{"chunk_length", c.chunk_length},
                   {"batch_size", c.batch_size},
                   {"learning_rate", c.learning_rate},
                   {"max_steps", c.max_steps},
                   {"ablation", std::string(to_string(c.ablation))},
                   {"seed", c.seed},
                   {"loss_weights", {{"bc", c.weights.bc}, {"centroid", c.weights.centroid},
                                     {"visibility", c.weights.visibility}}},
                   {"clip_norm", c.clip_norm},
                   {"weight_decay", c.weight_decay}};
  j["freeze_view_encoder_after"] =
      c.freeze_view_encoder_after ? nlohmann::json(*c.freeze_view_encoder_after) : nlohmann::json(nullptr);
  return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.chunk_length = j.value("chunk_length", c.chunk_length);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.ablation = ablation_from(j.value("ablation", std::string("full")));
    c.seed = j.value("seed", c.seed);
    if (j.contains("freeze_view_encoder_after") && !j["freeze_view_encoder_after"].is_null()) {
      c.freeze_view_encoder_after = j["freeze_view_encoder_after"].get<int>();
    }
    if (j.contains("loss_weights")) {
      const auto& w = j["loss_weights"];
      c.weights.bc = w.value("bc", 1.0);
      c.weights.centroid = w.value("centroid", 1.0);
      c.weights.visibility = w.value("visibility", 1.0);
    }
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return c;
}

/// One line of the metrics log. Loss values are per-frame means over the
/// frames processed in the step.
struct StepMetrics {
  int step = 0;
  LossBreakdown loss;
  double learning_rate = 0.0;
  double grad_norm = 0.0;
  int frames = 0;
  friend bool operator==(const StepMetrics& a, const StepMetrics& b) {
    return a.step == b.step && a.loss.bc == b.loss.bc && a.loss.centroid == b.loss.centroid &&
           a.loss.visibility == b.loss.visibility && a.loss.total == b.loss.total &&
           a.grad_norm == b.grad_norm && a.frames == b.frames;
  }
};

inline nlohmann::json to_json(const StepMetrics& m) {
  return {{"step", m.step},           {"bc", m.loss.bc},
          {"centroid", m.loss.centroid}, {"visibility", m.loss.visibility},
          {"total", m.loss.total},    {"lr", m.learning_rate},
          {"grad_norm", m.grad_norm}, {"frames", m.frames}};
}

/// Chunked truncated-backpropagation trainer. Each of `batch_size` lanes
/// walks through one clip at a time, chunk by chunk, carrying the temporal
/// memory (detached) between chunks of the same clip.
template <typename T>
class Trainer {
 public:
  Trainer(policy::Policy<T>& model, const std::vector<TrainingClip>& clips, TrainConfig config)
      : model_(model),
        clips_(clips),
        config_(config),
        rng_(config.seed * 0xD1B54A32D192ED03ull + 3),
        optimizer_(model.parameters(), adam_options(config)) {
    config_.validate(model.config());
    if (clips_.empty()) throw DatasetError("training set is empty");
    lanes_.resize(static_cast<std::size_t>(std::min<int>(config_.batch_size, static_cast<int>(clips_.size()))));
    for (auto& lane : lanes_) start_clip(lane);
  }

  StepMetrics step() {
    if (config_.freeze_view_encoder_after && step_ == *config_.freeze_view_encoder_after) {
      model_.parameters().set_trainable("view.", false);
    }
    std::vector<policy::LaneInput> inputs;
    std::vector<policy::MemoryCache<T>*> memories;
    std::vector<FrameTarget> targets;
    std::vector<int> counts;
    for (auto& lane : lanes_) {
      const auto& clip = clips_[lane.clip];
      const int n = std::min(config_.chunk_length, clip.length() - lane.position);
      policy::LaneInput in;
      for (int t = lane.position; t < lane.position + n; ++t) in.frames.push_back(&clip.rgb[static_cast<std::size_t>(t)]);
      in.prev_actions = previous_actions(clip, lane.position, n);
      in.goal = &lane.goal;
      inputs.push_back(std::move(in));
      memories.push_back(&lane.memory);
      targets.insert(targets.end(), clip.targets.begin() + lane.position, clip.targets.begin() + lane.position + n);
      counts.push_back(n);
    }
    model_.parameters().zero_grad();
    const auto out = model_.forward_lanes(inputs, memories);
    const auto terms = clip_loss(out, targets, config_.ablation, config_.weights);
    const double frames = static_cast<double>(targets.size());
    StepMetrics m;
    m.step = step_;
    m.frames = static_cast<int>(targets.size());
    m.learning_rate = config_.learning_rate;
    m.loss = {terms.breakdown.bc / frames, terms.breakdown.centroid / frames, terms.breakdown.visibility / frames,
              terms.breakdown.total / frames};
    if (!std::isfinite(m.loss.total) || !std::isfinite(terms.objective.item())) {
      std::ostringstream msg;
      msg << "non-finite loss at step " << step_ << " (bc " << m.loss.bc << ", centroid " << m.loss.centroid
          << ", visibility " << m.loss.visibility << ")";
      throw NonFiniteLossError(msg.str());
    }
    nn::backward(nn::scale(terms.objective, static_cast<T>(1.0 / frames)));
    m.grad_norm = optimizer_.step();
    if (!std::isfinite(m.grad_norm)) {
      throw NonFiniteLossError("non-finite gradient norm at step " + std::to_string(step_));
    }
    for (std::size_t i = 0; i < lanes_.size(); ++i) {
      auto& lane = lanes_[i];
      lane.position += counts[i];
      if (lane.position >= clips_[lane.clip].length()) start_clip(lane);
    }
    ++step_;
    return m;
  }

  /// Runs `config.max_steps` steps, reporting each to `on_step`.
  void run(const std::function<void(const StepMetrics&)>& on_step = {}) {
    while (step_ < config_.max_steps) {
      const auto m = step();
      if (on_step) on_step(m);
    }
  }

  int steps_done() const { return step_; }

 private:
  struct Lane {
    std::size_t clip = 0;
    int position = 0;
    policy::MemoryCache<T> memory;
    policy::GoalSpec goal;
  };

  static nn::AdamOptions adam_options(const TrainConfig& c) {
    nn::AdamOptions o;
    o.learning_rate = c.learning_rate;
    o.clip_norm = c.clip_norm;
    o.weight_decay = c.weight_decay;
    return o;
  }

  std::size_t next_clip() {
    if (cursor_ >= order_.size()) {
      order_.resize(clips_.size());
      for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
      std::shuffle(order_.begin(), order_.end(), rng_);
      cursor_ = 0;
    }
    return order_[cursor_++];
  }

  void start_clip(Lane& lane) {
    lane.clip = next_clip();
    lane.position = 0;
    lane.memory = model_.new_memory();
    const auto& clip = clips_[lane.clip];
    std::uniform_int_distribution<std::size_t> pick(0, clip.visible.size() - 1);
    lane.goal = goal_from_frame(clip, clip.visible[pick(rng_)], model_.config().image_size);
  }

  policy::Policy<T>& model_;
  const std::vector<TrainingClip>& clips_;
  TrainConfig config_;
  std::mt19937_64 rng_;
  nn::Adam<T> optimizer_;
  std::vector<Lane> lanes_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  int step_ = 0;
};

/// Forward-only loss of a whole clip evaluated in chunks of `chunk_length`
/// with memory carried across chunks. Returned values are sums over frames.
template <typename T>
LossBreakdown sequence_loss(const policy::Policy<T>& model, const TrainingClip& clip, const policy::GoalSpec& goal,
                            int chunk_length, Ablation ablation) {
  nn::NoGradGuard guard;
  auto memory = model.new_memory();
  LossBreakdown total;
  for (int begin = 0; begin < clip.length(); begin += chunk_length) {
    const int n = std::min(chunk_length, clip.length() - begin);
    std::vector<const std::vector<std::uint8_t>*> frames;
    for (int t = begin; t < begin + n; ++t) frames.push_back(&clip.rgb[static_cast<std::size_t>(t)]);
    const auto out = model.forward_clip(frames, previous_actions(clip, begin, n), goal, memory);
    const std::vector<FrameTarget> targets(clip.targets.begin() + begin, clip.targets.begin() + begin + n);
    const auto b = clip_loss(out, targets, ablation).breakdown;
    total.bc += b.bc;
    total.centroid += b.centroid;
    total.visibility += b.visibility;
    total.total += b.total;
  }
  return total;
}

}  // namespace xview::training
