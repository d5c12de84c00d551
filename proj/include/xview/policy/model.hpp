#pragma once

#include "xview/nn/layers.hpp"
#include "xview/policy/config.hpp"
#include "xview/policy/goal_spec.hpp"
#include "xview/world/types.hpp"

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace xview::policy {

using nn::Index;
using nn::Matrix;
using nn::Var;

/// Sliding key/value history of the temporal transformer: per layer, the
/// keys and values of up to M past frames, oldest first.
template <typename T>
struct MemoryCache {
  int capacity = 0;
  int width = 0;
  std::vector<Matrix<T>> keys;
  std::vector<Matrix<T>> values;

  MemoryCache() = default;
  MemoryCache(int layers, int capacity_, int width_) : capacity(capacity_), width(width_) { reset(layers); }

  void reset(int layers) {
    keys.assign(static_cast<std::size_t>(layers), Matrix<T>(0, width));
    values.assign(static_cast<std::size_t>(layers), Matrix<T>(0, width));
  }
  void reset() { reset(static_cast<int>(keys.size())); }
  int layers() const { return static_cast<int>(keys.size()); }
  int filled_length() const { return keys.empty() ? 0 : static_cast<int>(keys.front().rows()); }
  friend bool operator==(const MemoryCache&, const MemoryCache&) = default;
};

/// Per-frame head outputs, one row per frame.
template <typename T>
struct HeadOutputs {
  Var<T> move;        // F x 5
  Var<T> interact;    // F x 4
  Var<T> turn;        // F x B
  Var<T> centroid;    // F x P^2
  Var<T> visibility;  // F x 1
};

/// Model input for one sequence of frames sharing a goal.
struct LaneInput {
  std::vector<const std::vector<std::uint8_t>*> frames;  // rgb at policy resolution
  std::vector<world::Action> prev_actions;                // one per frame
  const GoalSpec* goal = nullptr;
};

/// Attention probabilities of the first spatial-fusion layer for one frame:
/// one (2P^2) x (2P^2) matrix per head (plus a CLS row/column with cls pooling).
template <typename T>
struct SpatialAttention {
  std::vector<Matrix<T>> per_head;
};

/// Index of the null action's turn bin (zero turn).
inline int null_turn_bin(int bins) { return (bins - 1) / 2; }

template <typename T>
Matrix<T> patchify_rgb(const std::vector<const std::vector<std::uint8_t>*>& images, int size, int patch) {
  const int grid = size / patch;
  const Index per = static_cast<Index>(grid) * grid;
  Matrix<T> out(static_cast<Index>(images.size()) * per, 3 * patch * patch);
  for (std::size_t n = 0; n < images.size(); ++n) {
    const auto& img = *images[n];
    if (img.size() != static_cast<std::size_t>(size * size * 3)) {
      throw nn::ShapeError("encode_view: expected " + std::to_string(size) + "x" + std::to_string(size) +
                           " RGB input");
    }
    for (int gr = 0; gr < grid; ++gr) {
      for (int gc = 0; gc < grid; ++gc) {
        const Index row = static_cast<Index>(n) * per + gr * grid + gc;
        Index col = 0;
        for (int r = 0; r < patch; ++r) {
          const std::size_t base = static_cast<std::size_t>(((gr * patch + r) * size + gc * patch) * 3);
          for (int k = 0; k < patch * 3; ++k) {
            out(row, col++) = static_cast<T>(img[base + static_cast<std::size_t>(k)]) / T(127.5) - T(1);
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
Matrix<T> patchify_mask(const std::vector<const world::Mask*>& masks, int size, int patch) {
  const int grid = size / patch;
  const Index per = static_cast<Index>(grid) * grid;
  Matrix<T> out(static_cast<Index>(masks.size()) * per, patch * patch);
  for (std::size_t n = 0; n < masks.size(); ++n) {
    const auto& m = *masks[n];
    if (m.height != size || m.width != size) {
      throw nn::ShapeError("encode_mask: expected a " + std::to_string(size) + "x" + std::to_string(size) +
                           " mask");
    }
    for (int gr = 0; gr < grid; ++gr) {
      for (int gc = 0; gc < grid; ++gc) {
        const Index row = static_cast<Index>(n) * per + gr * grid + gc;
        Index col = 0;
        for (int r = 0; r < patch; ++r) {
          for (int c = 0; c < patch; ++c) out(row, col++) = m.at(gr * patch + r, gc * patch + c) ? T(1) : T(0);
        }
      }
    }
  }
  return out;
}

/// Patch transformer: linear patch embedding, learned positions, blocks.
template <typename T>
struct PatchEncoder {
  nn::Linear<T> embed;
  Var<T> position;
  std::vector<nn::EncoderBlock<T>> blocks;
  nn::LayerNorm<T> norm;

  PatchEncoder() = default;
  PatchEncoder(nn::ParameterSet<T>& p, const std::string& name, Index in, const ModelConfig& c, int n_blocks,
               int ffn_mult, std::mt19937_64& rng)
      : embed(p, name + ".embed", in, c.width, rng) {
    position = p.add(name + ".position", nn::random_normal<T>(c.tokens(), c.width, T(0.02), rng));
    for (int i = 0; i < n_blocks; ++i) {
      blocks.emplace_back(p, name + ".block" + std::to_string(i), c.width, c.heads,
                          static_cast<Index>(ffn_mult) * c.width, rng);
    }
    norm = nn::LayerNorm<T>(p, name + ".norm", c.width);
  }

  Var<T> operator()(const Matrix<T>& patches, Index images) const {
    Var<T> x = nn::add_tiled(embed(nn::constant(patches)), position);
    for (const auto& b : blocks) x = b(x, images);
    return norm(x);
  }
};

/// Temporal layer whose keys and values are projected from the layer-0
/// input stream, so every layer sees exactly the frames inside the window.
template <typename T>
struct TemporalLayer {
  nn::LayerNorm<T> norm_q;
  nn::LayerNorm<T> norm_kv;
  nn::Linear<T> q;
  nn::Linear<T> kv;
  nn::Linear<T> proj;
  Var<T> bias;  // heads x (M + 1) relative-position logits
  nn::LayerNorm<T> norm_ffn;
  nn::FeedForward<T> ffn;

  TemporalLayer() = default;
  TemporalLayer(nn::ParameterSet<T>& p, const std::string& name, const ModelConfig& c, std::mt19937_64& rng)
      : norm_q(p, name + ".norm_q", c.width),
        norm_kv(p, name + ".norm_kv", c.width),
        q(p, name + ".q", c.width, c.width, rng),
        kv(p, name + ".kv", c.width, 2 * c.width, rng),
        proj(p, name + ".proj", c.width, c.width, rng) {
    bias = p.add(name + ".rel_bias", Matrix<T>::Zero(c.heads, c.memory + 1));
    norm_ffn = nn::LayerNorm<T>(p, name + ".norm_ffn", c.width);
    ffn = nn::FeedForward<T>(p, name + ".ffn", c.width, static_cast<Index>(c.ffn_mult) * c.width, rng);
  }
};

/// The cross-view policy network.
template <typename T>
class Policy {
 public:
  explicit Policy(const ModelConfig& config) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(config_.seed * 0x9E3779B97F4A7C15ull + 17);
    const ModelConfig& c = config_;
    auto& p = params_;
    const Index d = c.width;
    view_ = PatchEncoder<T>(p, "view", 3 * c.patch_size * c.patch_size, c, c.view_blocks, c.ffn_mult, rng);
    mask_ = PatchEncoder<T>(p, "mask", c.patch_size * c.patch_size, c, c.mask_blocks, c.mask_ffn_mult, rng);
    fuse_skip_ = nn::Linear<T>(p, "fuse.skip", 2 * d, d, rng);
    fuse_ffn_ = nn::FeedForward<T>(p, "fuse.ffn", 2 * d, 2 * d, rng);
    // FeedForward maps back to its input width; project the residual branch to D.
    fuse_out_ = nn::Linear<T>(p, "fuse.out", 2 * d, d, rng);
    segment_ = p.add("spatial.segment", nn::random_normal<T>(2, d, T(0.02), rng));
    if (c.pooling == Pooling::cls) cls_ = p.add("spatial.cls", nn::random_normal<T>(1, d, T(0.02), rng));
    for (int i = 0; i < c.spatial_blocks; ++i) {
      spatial_.emplace_back(p, "spatial.block" + std::to_string(i), d, c.heads, static_cast<Index>(c.ffn_mult) * d,
                            rng);
    }
    spatial_norm_ = nn::LayerNorm<T>(p, "spatial.norm", d);
    move_embed_ = p.add("temporal.move_embed", nn::random_normal<T>(world::kMoveCount, d, T(0.02), rng));
    interact_embed_ =
        p.add("temporal.interact_embed", nn::random_normal<T>(world::kInteractCount, d, T(0.02), rng));
    turn_embed_ = p.add("temporal.turn_embed", nn::random_normal<T>(c.turn_bins, d, T(0.02), rng));
    event_embed_ = p.add("temporal.event_embed", nn::random_normal<T>(world::kEventKindCount, d, T(0.02), rng));
    for (int i = 0; i < c.temporal_blocks; ++i) temporal_.emplace_back(p, "temporal.layer" + std::to_string(i), c, rng);
    temporal_norm_ = nn::LayerNorm<T>(p, "temporal.norm", d);
    const bool z = c.zero_init_heads;
    head_move_ = nn::Linear<T>(p, "head.move", d, world::kMoveCount, rng, z);
    head_interact_ = nn::Linear<T>(p, "head.interact", d, world::kInteractCount, rng, z);
    head_turn_ = nn::Linear<T>(p, "head.turn", d, c.turn_bins, rng, z);
    head_centroid_ = nn::Linear<T>(p, "head.centroid", d, c.tokens(), rng, z);
    head_visibility_ = nn::Linear<T>(p, "head.visibility", d, 1, rng, z);
  }

  Policy(const Policy&) = delete;
  Policy& operator=(const Policy&) = delete;

  const ModelConfig& config() const { return config_; }
  nn::ParameterSet<T>& parameters() { return params_; }
  nn::Linear<T>& fuse_skip() { return fuse_skip_; }
  nn::Linear<T>& fuse_out() { return fuse_out_; }
  const nn::ParameterSet<T>& parameters() const { return params_; }

  MemoryCache<T> new_memory() const { return MemoryCache<T>(config_.temporal_blocks, config_.memory, config_.width); }

  /// Token grids (P^2 rows per image) for a batch of RGB images.
  Var<T> encode_view(const std::vector<const std::vector<std::uint8_t>*>& images) const {
    return view_(patchify_rgb<T>(images, config_.image_size, config_.patch_size), static_cast<Index>(images.size()));
  }
  Var<T> encode_view(const std::vector<std::uint8_t>& image) const { return encode_view(std::vector{&image}); }

  Var<T> encode_mask(const std::vector<const world::Mask*>& masks) const {
    return mask_(patchify_mask<T>(masks, config_.image_size, config_.patch_size), static_cast<Index>(masks.size()));
  }
  Var<T> encode_mask(const world::Mask& mask) const { return encode_mask(std::vector{&mask}); }

  /// Per-token goal fusion: h = S c + W_out FFN(c) with c = [view | mask].
  Var<T> fuse_goal(const Var<T>& view_tokens, const Var<T>& mask_tokens) const {
    if (view_tokens.rows() != mask_tokens.rows() || view_tokens.cols() != config_.width ||
        mask_tokens.cols() != config_.width) {
      throw nn::ShapeError("fuse_goal: token grids do not align");
    }
    const Var<T> c = nn::concat_cols(view_tokens, mask_tokens);
    return nn::add(fuse_skip_(c), fuse_out_(fuse_ffn_(c)));
  }

  Var<T> encode_goal(const GoalSpec& goal) const {
    check_goal(goal);
    return fuse_goal(encode_view(goal.goal_view), encode_mask(goal.goal_mask));
  }

  /// Spatial fusion of F current frames (F * P^2 rows) against one fused
  /// goal grid. Returns F x D frame embeddings. When `attention` is non-null
  /// it receives the first layer's per-head maps for every frame.
  Var<T> spatial_fusion(const Var<T>& current, const Var<T>& goal,
                        std::vector<SpatialAttention<T>>* attention = nullptr) const {
    const Index p2 = config_.tokens();
    if (current.rows() % p2 != 0 || goal.rows() != p2) throw nn::ShapeError("spatial_fusion: expected P^2-token grids");
    const Index frames = current.rows() / p2;
    return spatial_batch({current}, {goal}, {frames}, attention);
  }

  /// Temporal transformer over F consecutive frame embeddings of one
  /// sequence; `memory` holds earlier frames and is advanced in place
  /// (its contents are detached from the graph).
  Var<T> temporal(const Var<T>& x, const std::vector<world::Action>& prev_actions, world::EventKind event,
                  MemoryCache<T>& memory) const {
    std::vector<MemoryCache<T>*> mems{&memory};
    return temporal_batch(x, {prev_actions}, {event}, mems);
  }

  HeadOutputs<T> heads(const Var<T>& f) const {
    return {head_move_(f), head_interact_(f), head_turn_(f), head_centroid_(f), head_visibility_(f)};
  }

  /// Runs several independent sequences through the whole network in one
  /// batch. Each lane's goal is encoded once and reused for all its frames.
  /// Head rows are stacked lane after lane.
  HeadOutputs<T> forward_lanes(const std::vector<LaneInput>& lanes, std::vector<MemoryCache<T>*>& memories,
                               std::vector<SpatialAttention<T>>* attention = nullptr) const {
    if (lanes.empty() || memories.size() != lanes.size()) throw StateError("forward_lanes: one memory per lane");
    std::vector<const std::vector<std::uint8_t>*> images;
    std::vector<const world::Mask*> masks;
    std::vector<Index> counts;
    std::vector<std::vector<world::Action>> actions;
    std::vector<world::EventKind> events;
    for (const auto& lane : lanes) {
      if (lane.frames.empty()) throw InvalidClipError("lane has no frames");
      if (lane.prev_actions.size() != lane.frames.size()) throw InvalidClipError("one previous action per frame");
      if (lane.goal == nullptr) throw StateError("lane has no goal");
      check_goal(*lane.goal);
      images.insert(images.end(), lane.frames.begin(), lane.frames.end());
      counts.push_back(static_cast<Index>(lane.frames.size()));
      actions.push_back(lane.prev_actions);
      events.push_back(lane.goal->event);
    }
    const Index total = static_cast<Index>(images.size());
    for (const auto& lane : lanes) {
      images.push_back(&lane.goal->goal_view);
      masks.push_back(&lane.goal->goal_mask);
    }
    const Index p2 = config_.tokens();
    const Var<T> views = encode_view(images);
    const Var<T> goals =
        fuse_goal(nn::slice_rows(views, total * p2, static_cast<Index>(lanes.size()) * p2), encode_mask(masks));
    std::vector<Var<T>> current;
    std::vector<Var<T>> goal_rows;
    Index offset = 0;
    for (std::size_t i = 0; i < lanes.size(); ++i) {
      current.push_back(nn::slice_rows(views, offset * p2, counts[i] * p2));
      goal_rows.push_back(nn::slice_rows(goals, static_cast<Index>(i) * p2, p2));
      offset += counts[i];
    }
    const Var<T> x = spatial_batch(current, goal_rows, counts, attention);
    return heads(temporal_batch(x, actions, events, memories));
  }

  /// One sequence with its goal; equivalent to a single-lane forward_lanes.
  HeadOutputs<T> forward_clip(const std::vector<const std::vector<std::uint8_t>*>& frames,
                              const std::vector<world::Action>& prev_actions, const GoalSpec& goal,
                              MemoryCache<T>& memory) const {
    std::vector<LaneInput> lanes{{frames, prev_actions, &goal}};
    std::vector<MemoryCache<T>*> mems{&memory};
    return forward_lanes(lanes, mems);
  }

  /// Single-frame step against pre-encoded goal tokens (P^2 x D).
  HeadOutputs<T> step(const std::vector<std::uint8_t>& frame, const world::Action& prev_action,
                      world::EventKind event, const Var<T>& goal_tokens, MemoryCache<T>& memory,
                      std::vector<SpatialAttention<T>>* attention = nullptr) const {
    const Var<T> x = spatial_fusion(encode_view(frame), goal_tokens, attention);
    return heads(temporal(x, {prev_action}, event, memory));
  }

  /// Frame embeddings for several lanes; lane i has counts[i] frames.
  Var<T> spatial_batch(const std::vector<Var<T>>& current, const std::vector<Var<T>>& goals,
                       const std::vector<Index>& counts, std::vector<SpatialAttention<T>>* attention) const {
    const Index p2 = config_.tokens();
    const bool cls = config_.pooling == Pooling::cls;
    const Var<T> seg_cur = nn::slice_rows(segment_, 0, 1);
    const Var<T> seg_goal = nn::slice_rows(segment_, 1, 1);
    std::vector<Var<T>> seqs;
    Index frames = 0;
    for (std::size_t i = 0; i < current.size(); ++i) {
      if (current[i].rows() != counts[i] * p2 || goals[i].rows() != p2) {
        throw nn::ShapeError("spatial_fusion: token count mismatch");
      }
      Var<T> shared = nn::add_tiled(goals[i], seg_goal);
      if (cls) shared = nn::concat_rows(std::vector<Var<T>>{shared, cls_});
      seqs.push_back(nn::pair_with_shared(nn::add_tiled(current[i], seg_cur), shared, p2));
      frames += counts[i];
    }
    Var<T> x = seqs.size() == 1 ? seqs.front() : nn::concat_rows(seqs);
    const Index group = config_.fused_tokens();
    std::vector<Matrix<T>> probs;
    for (std::size_t b = 0; b < spatial_.size(); ++b) {
      x = spatial_[b](x, frames, (b == 0 && attention != nullptr) ? &probs : nullptr);
    }
    if (attention != nullptr) {
      attention->assign(static_cast<std::size_t>(frames), {});
      const auto heads = static_cast<std::size_t>(config_.heads);
      for (std::size_t f = 0; f < static_cast<std::size_t>(frames); ++f) {
        for (std::size_t h = 0; h < heads; ++h) (*attention)[f].per_head.push_back(std::move(probs[f * heads + h]));
      }
    }
    const Var<T> pooled = cls ? nn::group_mean_rows(x, group, 2 * p2, 1) : nn::group_mean_rows(x, group, 0, p2);
    return spatial_norm_(pooled);
  }

  /// Temporal features for stacked lanes (rows of `x` lane after lane).
  Var<T> temporal_batch(const Var<T>& x, const std::vector<std::vector<world::Action>>& actions,
                        const std::vector<world::EventKind>& events,
                        std::vector<MemoryCache<T>*>& memories) const {
    const int d = config_.width;
    const std::size_t lanes = actions.size();
    if (events.size() != lanes || memories.size() != lanes) throw StateError("temporal: lane count mismatch");
    std::vector<int> move_idx;
    std::vector<int> interact_idx;
    std::vector<int> turn_idx;
    std::vector<int> event_idx;
    std::vector<Index> counts;
    for (std::size_t i = 0; i < lanes; ++i) {
      auto* mem = memories[i];
      if (mem->layers() != config_.temporal_blocks || mem->width != d || mem->capacity != config_.memory) {
        throw StateError("memory cache does not match the model dimensions");
      }
      counts.push_back(static_cast<Index>(actions[i].size()));
      for (const auto& a : actions[i]) {
        move_idx.push_back(static_cast<int>(a.move));
        interact_idx.push_back(static_cast<int>(a.interact));
        turn_idx.push_back(world::bin_for_turn(a.turn, config_.turn_bins));
        event_idx.push_back(static_cast<int>(events[i]));
      }
    }
    if (static_cast<Index>(move_idx.size()) != x.rows() || x.cols() != d) {
      throw nn::ShapeError("temporal: one frame embedding per action expected");
    }
    Var<T> u = nn::add(x, nn::gather_rows(move_embed_, move_idx));
    u = nn::add(u, nn::gather_rows(interact_embed_, interact_idx));
    u = nn::add(u, nn::gather_rows(turn_embed_, turn_idx));
    u = nn::add(u, nn::gather_rows(event_embed_, event_idx));

    Var<T> h = u;
    std::vector<std::vector<Matrix<T>>> new_keys(lanes);
    std::vector<std::vector<Matrix<T>>> new_values(lanes);
    for (std::size_t l = 0; l < temporal_.size(); ++l) {
      const auto& layer = temporal_[l];
      const Var<T> kv = layer.kv(layer.norm_kv(u));
      const Var<T> q = layer.q(layer.norm_q(h));
      std::vector<Var<T>> outs;
      Index offset = 0;
      for (std::size_t i = 0; i < lanes; ++i) {
        const Index n = counts[i];
        const auto& mk = memories[i]->keys[l];
        const auto& mv = memories[i]->values[l];
        const Index m = mk.rows();
        const Var<T> kv_i = nn::slice_rows(kv, offset, n);
        Var<T> k = nn::slice_cols(kv_i, 0, d);
        Var<T> v = nn::slice_cols(kv_i, d, d);
        new_keys[i].push_back(k.value());
        new_values[i].push_back(v.value());
        if (m > 0) {
          k = nn::concat_rows(std::vector<Var<T>>{nn::constant(mk), k});
          v = nn::concat_rows(std::vector<Var<T>>{nn::constant(mv), v});
        }
        nn::AttentionLayout layout;
        layout.groups = 1;
        layout.query_len = n;
        layout.key_len = m + n;
        layout.query_offset = m;
        layout.causal = true;
        layout.window = config_.memory;
        outs.push_back(nn::multi_head_attention(nn::slice_rows(q, offset, n), k, v, config_.heads, layout, layer.bias));
        offset += n;
      }
      const Var<T> attended = lanes == 1 ? outs.front() : nn::concat_rows(outs);
      h = nn::add(h, layer.proj(attended));
      h = nn::add(h, layer.ffn(layer.norm_ffn(h)));
    }
    for (std::size_t i = 0; i < lanes; ++i) {
      auto* mem = memories[i];
      for (std::size_t l = 0; l < temporal_.size(); ++l) {
        mem->keys[l] = append_window(mem->keys[l], new_keys[i][l]);
        mem->values[l] = append_window(mem->values[l], new_values[i][l]);
      }
    }
    return temporal_norm_(h);
  }

 private:
  void check_goal(const GoalSpec& goal) const {
    if (goal.goal_mask.empty()) throw InvalidGoalError("goal mask is empty");
    if (goal.height != config_.image_size || goal.width != config_.image_size) {
      throw nn::ShapeError("goal view is not at policy resolution");
    }
  }

  Matrix<T> append_window(const Matrix<T>& old, const Matrix<T>& fresh) const {
    const Index keep = std::min<Index>(config_.memory, old.rows() + fresh.rows());
    Matrix<T> all(old.rows() + fresh.rows(), old.cols());
    all << old, fresh;
    return all.bottomRows(keep);
  }

  ModelConfig config_;
  nn::ParameterSet<T> params_;
  PatchEncoder<T> view_;
  PatchEncoder<T> mask_;
  nn::Linear<T> fuse_skip_;
  nn::FeedForward<T> fuse_ffn_;
  nn::Linear<T> fuse_out_;
  Var<T> segment_;
  Var<T> cls_;
  std::vector<nn::EncoderBlock<T>> spatial_;
  nn::LayerNorm<T> spatial_norm_;
  Var<T> move_embed_;
  Var<T> interact_embed_;
  Var<T> turn_embed_;
  Var<T> event_embed_;
  std::vector<TemporalLayer<T>> temporal_;
  nn::LayerNorm<T> temporal_norm_;
  nn::Linear<T> head_move_;
  nn::Linear<T> head_interact_;
  nn::Linear<T> head_turn_;
  nn::Linear<T> head_centroid_;
  nn::Linear<T> head_visibility_;
};

}  // namespace xview::policy
