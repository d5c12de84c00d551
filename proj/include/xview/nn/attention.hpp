#pragma once

#include "xview/nn/ops.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace xview::nn {

/// Describes how query and key rows are grouped and masked.
///
/// Rows of Q are `groups` consecutive blocks of `query_len`; rows of K and V
/// are `groups` blocks of `key_len`. Attention never crosses a group. Query i
/// of a group sits at position `query_offset + i` on the key axis; with
/// `causal`, it sees keys at positions <= its own, and with `window` >= 0 only
/// keys at most `window` positions behind it.
struct AttentionLayout {
  Index groups = 1;
  Index query_len = 0;
  Index key_len = 0;
  Index query_offset = 0;
  bool causal = false;
  Index window = -1;
};

/// Multi-head scaled dot-product attention over pre-projected Q, K, V.
///
/// `relative_bias`, when defined, is a heads x (max_distance + 1) table added
/// to the logit of every (query, key) pair at distance query_pos - key_pos;
/// it requires a causal layout. Softmax probabilities per (group, head) are
/// copied to `probs_out` when non-null, indexed group * heads + head.
template <typename T>
Var<T> multi_head_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, Index heads,
                            const AttentionLayout& layout, const Var<T>& relative_bias = {},
                            std::vector<Matrix<T>>* probs_out = nullptr) {
  const Index d = q.cols();
  detail::require(heads > 0 && d % heads == 0, "attention: width not divisible by heads");
  detail::require(k.cols() == d && v.cols() == d, "attention: Q/K/V width mismatch");
  detail::require(q.rows() == layout.groups * layout.query_len &&
                      k.rows() == layout.groups * layout.key_len && v.rows() == k.rows(),
                  "attention: rows do not match layout");
  const bool has_bias = relative_bias.defined();
  if (has_bias) {
    detail::require(layout.causal, "attention: relative bias requires a causal layout");
    detail::require(relative_bias.rows() == heads, "attention: bias rows must equal heads");
    const Index max_dist = layout.window >= 0 ? layout.window
                                              : layout.query_offset + layout.query_len - 1;
    detail::require(relative_bias.cols() > max_dist, "attention: bias table too short");
  }

  const Index dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const Index lq = layout.query_len;
  const Index lk = layout.key_len;
  const T neg_inf = -std::numeric_limits<T>::infinity();

  auto visible = [&layout](Index qi, Index kj) {
    const Index qpos = layout.query_offset + qi;
    if (layout.causal && kj > qpos) return false;
    if (layout.window >= 0 && qpos - kj > layout.window) return false;
    return true;
  };

  const bool masked = layout.causal || layout.window >= 0 || has_bias;
  std::vector<Matrix<T>> probs(static_cast<std::size_t>(layout.groups * heads));
  Matrix<T> out(q.rows(), d);
  for (Index g = 0; g < layout.groups; ++g) {
    for (Index h = 0; h < heads; ++h) {
      const Matrix<T> qh = q.value().block(g * lq, h * dh, lq, dh);
      const Matrix<T> kh = k.value().block(g * lk, h * dh, lk, dh);
      const Matrix<T> vh = v.value().block(g * lk, h * dh, lk, dh);
      Matrix<T> s = (qh * kh.transpose()) * scale;
      if (!masked) {
        const auto m = s.rowwise().maxCoeff();
        s = (s.colwise() - m).array().exp().matrix();
        s.array().colwise() /= s.rowwise().sum().array();
      }
      for (Index i = 0; masked && i < lq; ++i) {
        for (Index j = 0; j < lk; ++j) {
          if (!visible(i, j)) {
            s(i, j) = neg_inf;
          } else if (has_bias) {
            s(i, j) += relative_bias.value()(h, layout.query_offset + i - j);
          }
        }
        const T m = s.row(i).maxCoeff();
        detail::require(m != neg_inf, "attention: a query sees no keys");
        s.row(i) = (s.row(i).array() - m).exp().matrix();
        s.row(i) /= s.row(i).sum();
      }
      out.block(g * lq, h * dh, lq, dh) = s * vh;
      probs[static_cast<std::size_t>(g * heads + h)] = std::move(s);
    }
  }
  if (probs_out != nullptr) *probs_out = probs;

  std::vector<Var<T>> inputs{q, k, v};
  if (has_bias) inputs.push_back(relative_bias);
  return make_op_n<T>(
      std::move(out), inputs,
      [probs = std::move(probs), layout, heads, dh, scale, has_bias](Node<T>& self) {
        auto& pq = *self.parents[0];
        auto& pk = *self.parents[1];
        auto& pv = *self.parents[2];
        Node<T>* pb = has_bias ? self.parents[3].get() : nullptr;
        const Index lq = layout.query_len;
        const Index lk = layout.key_len;
        for (Index g = 0; g < layout.groups; ++g) {
          for (Index h = 0; h < heads; ++h) {
            const Matrix<T>& p = probs[static_cast<std::size_t>(g * heads + h)];
            const Matrix<T> go = self.grad.block(g * lq, h * dh, lq, dh);
            const Matrix<T> vh = pv.value.block(g * lk, h * dh, lk, dh);
            if (pv.requires_grad) {
              pv.grad_ref().block(g * lk, h * dh, lk, dh).noalias() += p.transpose() * go;
            }
            const Matrix<T> dp = go * vh.transpose();
            const auto dot = (dp.array() * p.array()).rowwise().sum();
            Matrix<T> ds = (p.array() * (dp.array().colwise() - dot)).matrix();
            if (pb != nullptr && pb->requires_grad) {
              auto& gb = pb->grad_ref();
              for (Index i = 0; i < lq; ++i) {
                for (Index j = 0; j < lk; ++j) {
                  if (p(i, j) != T(0)) gb(h, layout.query_offset + i - j) += ds(i, j);
                }
              }
            }
            if (pq.requires_grad) {
              const Matrix<T> kh = pk.value.block(g * lk, h * dh, lk, dh);
              pq.grad_ref().block(g * lq, h * dh, lq, dh).noalias() += (ds * kh) * scale;
            }
            if (pk.requires_grad) {
              const Matrix<T> qh = pq.value.block(g * lq, h * dh, lq, dh);
              pk.grad_ref().block(g * lk, h * dh, lk, dh).noalias() +=
                  (ds.transpose() * qh) * scale;
            }
          }
        }
      });
}

}  // namespace xview::nn
