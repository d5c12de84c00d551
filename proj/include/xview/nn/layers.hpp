#pragma once

#include "xview/nn/attention.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace xview::nn {

/// Named, ordered collection of trainable leaves. Order of registration is
/// the serialization order.
template <typename T>
class ParameterSet {
 public:
  Var<T> add(const std::string& name, Matrix<T> init) {
    for (const auto& e : entries_) {
      if (e.first == name) throw ShapeError("duplicate parameter name: " + name);
    }
    Var<T> v(std::move(init), true);
    entries_.emplace_back(name, v);
    return v;
  }

  std::vector<std::pair<std::string, Var<T>>>& entries() { return entries_; }
  const std::vector<std::pair<std::string, Var<T>>>& entries() const { return entries_; }

  const Var<T>* find(const std::string& name) const {
    for (const auto& e : entries_) {
      if (e.first == name) return &e.second;
    }
    return nullptr;
  }

  void zero_grad() {
    for (auto& e : entries_) e.second.zero_grad();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += static_cast<std::size_t>(e.second.value().size());
    return n;
  }

  /// Marks every parameter whose name starts with `prefix` as (not) trainable.
  void set_trainable(const std::string& prefix, bool trainable) {
    for (auto& e : entries_) {
      if (e.first.rfind(prefix, 0) == 0) e.second.node()->requires_grad = trainable;
    }
  }

 private:
  std::vector<std::pair<std::string, Var<T>>> entries_;
};

template <typename T>
Matrix<T> random_normal(Index rows, Index cols, T stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
  Matrix<T> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
  return m;
}

template <typename T>
struct Linear {
  Var<T> weight;
  Var<T> bias;

  Linear() = default;
  Linear(ParameterSet<T>& params, const std::string& name, Index in, Index out,
         std::mt19937_64& rng, bool zero_init = false) {
    const T std = T(1) / std::sqrt(static_cast<T>(in));
    weight = params.add(name + ".weight",
                        zero_init ? Matrix<T>::Zero(in, out) : random_normal<T>(in, out, std, rng));
    bias = params.add(name + ".bias", Matrix<T>::Zero(1, out));
  }

  Var<T> operator()(const Var<T>& x) const { return linear(x, weight, bias); }
  Index in_features() const { return weight.rows(); }
  Index out_features() const { return weight.cols(); }
};

template <typename T>
struct LayerNorm {
  Var<T> gain;
  Var<T> shift;

  LayerNorm() = default;
  LayerNorm(ParameterSet<T>& params, const std::string& name, Index width) {
    gain = params.add(name + ".gain", Matrix<T>::Ones(1, width));
    shift = params.add(name + ".shift", Matrix<T>::Zero(1, width));
  }

  Var<T> operator()(const Var<T>& x) const { return layer_norm(x, gain, shift); }
};

template <typename T>
struct FeedForward {
  Linear<T> up;
  Linear<T> down;

  FeedForward() = default;
  FeedForward(ParameterSet<T>& params, const std::string& name, Index width, Index hidden,
              std::mt19937_64& rng)
      : up(params, name + ".up", width, hidden, rng), down(params, name + ".down", hidden, width, rng) {}

  Var<T> operator()(const Var<T>& x) const { return down(gelu(up(x))); }
};

/// Pre-norm transformer encoder block: x + Attn(LN(x)), then x + FFN(LN(x)).
template <typename T>
struct EncoderBlock {
  LayerNorm<T> norm_attn;
  Linear<T> qkv;
  Linear<T> proj;
  LayerNorm<T> norm_ffn;
  FeedForward<T> ffn;
  Index heads = 1;

  EncoderBlock() = default;
  EncoderBlock(ParameterSet<T>& params, const std::string& name, Index width, Index n_heads,
               Index ffn_hidden, std::mt19937_64& rng)
      : norm_attn(params, name + ".norm_attn", width),
        qkv(params, name + ".qkv", width, 3 * width, rng),
        proj(params, name + ".proj", width, width, rng),
        norm_ffn(params, name + ".norm_ffn", width),
        ffn(params, name + ".ffn", width, ffn_hidden, rng),
        heads(n_heads) {}

  /// Rows of `x` form `groups` independent sequences of equal length.
  Var<T> operator()(const Var<T>& x, Index groups, std::vector<Matrix<T>>* probs_out = nullptr) const {
    const Index width = x.cols();
    const Index len = x.rows() / groups;
    AttentionLayout layout;
    layout.groups = groups;
    layout.query_len = len;
    layout.key_len = len;
    const Var<T> packed = qkv(norm_attn(x));
    const Var<T> q = slice_cols(packed, 0, width);
    const Var<T> k = slice_cols(packed, width, width);
    const Var<T> v = slice_cols(packed, 2 * width, width);
    const Var<T> attended = multi_head_attention(q, k, v, heads, layout, Var<T>{}, probs_out);
    const Var<T> h = add(x, proj(attended));
    return add(h, ffn(norm_ffn(h)));
  }
};

}  // namespace xview::nn
