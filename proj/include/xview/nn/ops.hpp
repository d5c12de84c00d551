#pragma once

#include "xview/nn/autograd.hpp"

#include <cmath>
#include <memory>
#include <string>
#include <vector>

namespace xview::nn {

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace detail

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  detail::require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Matrix<T> out = a.value() * b.value();
  return make_op<T>(std::move(out), {&a, &b}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) pa.grad_ref().noalias() += self.grad * pb.value.transpose();
    if (pb.requires_grad) pb.grad_ref().noalias() += pa.value.transpose() * self.grad;
  });
}

/// x * W + b with b broadcast over rows.
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  detail::require(x.cols() == w.rows(), "linear: input width mismatch");
  detail::require(b.rows() == 1 && b.cols() == w.cols(), "linear: bias shape");
  Matrix<T> out = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  return make_op<T>(std::move(out), {&x, &w, &b}, [](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    auto& pb = *self.parents[2];
    if (px.requires_grad) px.grad_ref().noalias() += self.grad * pw.value.transpose();
    if (pw.requires_grad) pw.grad_ref().noalias() += px.value.transpose() * self.grad;
    if (pb.requires_grad) pb.grad_ref() += self.grad.colwise().sum();
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  Matrix<T> out = a.value() + b.value();
  return make_op<T>(std::move(out), {&a, &b}, [](Node<T>& self) {
    detail::accumulate(*self.parents[0], self.grad);
    detail::accumulate(*self.parents[1], self.grad);
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Matrix<T> out = a.value() * s;
  return make_op<T>(std::move(out), {&a}, [s](Node<T>& self) {
    detail::accumulate<T>(*self.parents[0], self.grad * s);
  });
}

/// Adds a pattern of R rows to every consecutive block of R rows in x.
/// R = 1 is a row broadcast.
template <typename T>
Var<T> add_tiled(const Var<T>& x, const Var<T>& pattern) {
  const Index r = pattern.rows();
  detail::require(x.cols() == pattern.cols() && r > 0 && x.rows() % r == 0,
                  "add_tiled: pattern does not tile input");
  Matrix<T> out = x.value();
  const Index reps = x.rows() / r;
  for (Index k = 0; k < reps; ++k) out.middleRows(k * r, r) += pattern.value();
  return make_op<T>(std::move(out), {&x, &pattern}, [r, reps](Node<T>& self) {
    detail::accumulate(*self.parents[0], self.grad);
    auto& pp = *self.parents[1];
    if (pp.requires_grad) {
      auto& g = pp.grad_ref();
      for (Index k = 0; k < reps; ++k) g += self.grad.middleRows(k * r, r);
    }
  });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  const T c = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
  const T k = static_cast<T>(0.044715);
  const auto v = x.value().array();
  // Eigen's tanh is vectorised; keep it for the backward pass
  auto t = std::make_shared<Matrix<T>>((c * (v + k * v.cube())).tanh().matrix());
  Matrix<T> out = (T(0.5) * v * (T(1) + t->array())).matrix();
  return make_op<T>(std::move(out), {&x}, [c, k, t](Node<T>& self) {
    auto& px = *self.parents[0];
    if (!px.requires_grad) return;
    const auto v = px.value.array();
    const auto th = t->array();
    px.grad_ref().array() += self.grad.array() * (T(0.5) * (T(1) + th) +
                                                  T(0.5) * v * (T(1) - th.square()) * c * (T(1) + T(3) * k * v.square()));
  });
}

/// Row-wise layer normalisation with affine gain and shift.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& shift,
                  T eps = static_cast<T>(1e-5)) {
  detail::require(gain.cols() == x.cols() && shift.cols() == x.cols(),
                  "layer_norm: parameter width mismatch");
  const Index n = x.rows();
  const Index d = x.cols();
  Matrix<T> xhat(n, d);
  std::vector<T> inv_std(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    auto row = x.value().row(i);
    const T mean = row.mean();
    const T var = (row.array() - mean).square().mean();
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(i)] = is;
    xhat.row(i) = (row.array() - mean) * is;
  }
  Matrix<T> out = xhat;
  out.array().rowwise() *= gain.value().row(0).array();
  out.rowwise() += shift.value().row(0);
  return make_op<T>(
      std::move(out), {&x, &gain, &shift},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), d](Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        if (pg.requires_grad) {
          pg.grad_ref() += (self.grad.array() * xhat.array()).colwise().sum().matrix();
        }
        if (pb.requires_grad) pb.grad_ref() += self.grad.colwise().sum();
        if (!px.requires_grad) return;
        auto& gx = px.grad_ref();
        const auto gain_row = pg.value.row(0).array();
        for (Index i = 0; i < self.grad.rows(); ++i) {
          Eigen::Array<T, 1, Eigen::Dynamic> dxh = self.grad.row(i).array() * gain_row;
          const T m1 = dxh.mean();
          const T m2 = (dxh * xhat.row(i).array()).mean();
          gx.row(i).array() +=
              inv_std[static_cast<std::size_t>(i)] * (dxh - m1 - xhat.row(i).array() * m2);
        }
        (void)d;
      });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  detail::require(!parts.empty(), "concat_rows: no inputs");
  Index rows = 0;
  for (const auto& p : parts) {
    detail::require(p.cols() == parts.front().cols(), "concat_rows: width mismatch");
    rows += p.rows();
  }
  Matrix<T> out(rows, parts.front().cols());
  std::vector<Index> offsets;
  Index off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    out.middleRows(off, p.rows()) = p.value();
    off += p.rows();
  }
  return make_op_n<T>(std::move(out), parts, [offsets](Node<T>& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      auto& p = *self.parents[k];
      if (p.requires_grad) p.grad_ref() += self.grad.middleRows(offsets[k], p.value.rows());
    }
  });
}

template <typename T>
Var<T> concat_cols(const Var<T>& a, const Var<T>& b) {
  detail::require(a.rows() == b.rows(), "concat_cols: row mismatch");
  Matrix<T> out(a.rows(), a.cols() + b.cols());
  out.leftCols(a.cols()) = a.value();
  out.rightCols(b.cols()) = b.value();
  const Index ca = a.cols();
  const Index cb = b.cols();
  return make_op<T>(std::move(out), {&a, &b}, [ca, cb](Node<T>& self) {
    detail::accumulate<T>(*self.parents[0], self.grad.leftCols(ca));
    detail::accumulate<T>(*self.parents[1], self.grad.rightCols(cb));
  });
}

template <typename T>
Var<T> slice_rows(const Var<T>& x, Index start, Index count) {
  detail::require(start >= 0 && count >= 0 && start + count <= x.rows(),
                  "slice_rows: out of range");
  Matrix<T> out = x.value().middleRows(start, count);
  return make_op<T>(std::move(out), {&x}, [start, count](Node<T>& self) {
    auto& px = *self.parents[0];
    if (px.requires_grad) px.grad_ref().middleRows(start, count) += self.grad;
  });
}

template <typename T>
Var<T> slice_cols(const Var<T>& x, Index start, Index count) {
  detail::require(start >= 0 && count >= 0 && start + count <= x.cols(),
                  "slice_cols: out of range");
  Matrix<T> out = x.value().middleCols(start, count);
  return make_op<T>(std::move(out), {&x}, [start, count](Node<T>& self) {
    auto& px = *self.parents[0];
    if (px.requires_grad) px.grad_ref().middleCols(start, count) += self.grad;
  });
}

/// For F frames of `per_frame` rows each in `frames`, emits per frame the
/// frame's rows followed by all rows of `shared`.
template <typename T>
Var<T> pair_with_shared(const Var<T>& frames, const Var<T>& shared, Index per_frame) {
  detail::require(frames.cols() == shared.cols(), "pair_with_shared: width mismatch");
  detail::require(per_frame > 0 && frames.rows() % per_frame == 0,
                  "pair_with_shared: frame rows do not divide");
  const Index f = frames.rows() / per_frame;
  const Index s = shared.rows();
  const Index group = per_frame + s;
  Matrix<T> out(f * group, frames.cols());
  for (Index k = 0; k < f; ++k) {
    out.middleRows(k * group, per_frame) = frames.value().middleRows(k * per_frame, per_frame);
    out.middleRows(k * group + per_frame, s) = shared.value();
  }
  return make_op<T>(std::move(out), {&frames, &shared}, [f, s, per_frame, group](Node<T>& self) {
    auto& pf = *self.parents[0];
    auto& ps = *self.parents[1];
    for (Index k = 0; k < f; ++k) {
      if (pf.requires_grad) {
        pf.grad_ref().middleRows(k * per_frame, per_frame) +=
            self.grad.middleRows(k * group, per_frame);
      }
      if (ps.requires_grad) ps.grad_ref() += self.grad.middleRows(k * group + per_frame, s);
    }
  });
}

/// Mean over rows [offset, offset + count) of every consecutive group.
template <typename T>
Var<T> group_mean_rows(const Var<T>& x, Index group, Index offset, Index count) {
  detail::require(group > 0 && x.rows() % group == 0 && offset >= 0 && count > 0 &&
                      offset + count <= group,
                  "group_mean_rows: bad grouping");
  const Index g = x.rows() / group;
  Matrix<T> out(g, x.cols());
  for (Index k = 0; k < g; ++k) {
    out.row(k) = x.value().middleRows(k * group + offset, count).colwise().mean();
  }
  return make_op<T>(std::move(out), {&x}, [g, group, offset, count](Node<T>& self) {
    auto& px = *self.parents[0];
    if (!px.requires_grad) return;
    auto& gx = px.grad_ref();
    const T inv = T(1) / static_cast<T>(count);
    for (Index k = 0; k < g; ++k) {
      gx.middleRows(k * group + offset, count).rowwise() += self.grad.row(k) * inv;
    }
  });
}

/// Selects rows of an embedding table.
template <typename T>
Var<T> gather_rows(const Var<T>& table, const std::vector<int>& idx) {
  Matrix<T> out(static_cast<Index>(idx.size()), table.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    detail::require(idx[i] >= 0 && idx[i] < table.rows(), "gather_rows: index out of range");
    out.row(static_cast<Index>(i)) = table.value().row(idx[i]);
  }
  return make_op<T>(std::move(out), {&table}, [idx](Node<T>& self) {
    auto& pt = *self.parents[0];
    if (!pt.requires_grad) return;
    auto& g = pt.grad_ref();
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += self.grad.row(static_cast<Index>(i));
  });
}

/// Sum of row-wise softmax cross-entropies. Rows whose target is negative or
/// whose weight is zero contribute nothing.
template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits, const std::vector<int>& targets,
                             const std::vector<T>& weights) {
  detail::require(static_cast<Index>(targets.size()) == logits.rows() &&
                      weights.size() == targets.size(),
                  "softmax_cross_entropy: target count mismatch");
  const Index n = logits.rows();
  const Index c = logits.cols();
  Matrix<T> probs(n, c);
  T total = 0;
  for (Index i = 0; i < n; ++i) {
    auto row = logits.value().row(i);
    const T m = row.maxCoeff();
    Eigen::Array<T, 1, Eigen::Dynamic> e = (row.array() - m).exp();
    const T z = e.sum();
    probs.row(i) = (e / z).matrix();
    const auto ti = targets[static_cast<std::size_t>(i)];
    const T w = weights[static_cast<std::size_t>(i)];
    if (ti < 0 || w == T(0)) continue;
    detail::require(ti < c, "softmax_cross_entropy: target out of range");
    total += w * (m + std::log(z) - row(ti));
  }
  Matrix<T> out(1, 1);
  out(0, 0) = total;
  return make_op<T>(std::move(out), {&logits},
                    [probs = std::move(probs), targets, weights](Node<T>& self) {
                      auto& pl = *self.parents[0];
                      if (!pl.requires_grad) return;
                      auto& g = pl.grad_ref();
                      const T go = self.grad(0, 0);
                      for (Index i = 0; i < probs.rows(); ++i) {
                        const auto ti = targets[static_cast<std::size_t>(i)];
                        const T w = weights[static_cast<std::size_t>(i)];
                        if (ti < 0 || w == T(0)) continue;
                        g.row(i) += go * w * probs.row(i);
                        g(i, ti) -= go * w;
                      }
                    });
}

/// Sum of weighted binary cross-entropies on a single logit column.
template <typename T>
Var<T> sigmoid_binary_cross_entropy(const Var<T>& logits, const std::vector<T>& targets,
                                    const std::vector<T>& weights) {
  detail::require(logits.cols() == 1 && static_cast<Index>(targets.size()) == logits.rows() &&
                      weights.size() == targets.size(),
                  "sigmoid_binary_cross_entropy: shape mismatch");
  T total = 0;
  for (Index i = 0; i < logits.rows(); ++i) {
    const T z = logits.value()(i, 0);
    const T softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    const auto k = static_cast<std::size_t>(i);
    total += weights[k] * (softplus - targets[k] * z);
  }
  Matrix<T> out(1, 1);
  out(0, 0) = total;
  return make_op<T>(std::move(out), {&logits}, [targets, weights](Node<T>& self) {
    auto& pl = *self.parents[0];
    if (!pl.requires_grad) return;
    auto& g = pl.grad_ref();
    const T go = self.grad(0, 0);
    for (Index i = 0; i < pl.value.rows(); ++i) {
      const T z = pl.value(i, 0);
      const T s = T(1) / (T(1) + std::exp(-z));
      const auto k = static_cast<std::size_t>(i);
      g(i, 0) += go * weights[k] * (s - targets[k]);
    }
  });
}

template <typename T>
Var<T> add_scalars(const std::vector<Var<T>>& terms) {
  Matrix<T> out = Matrix<T>::Zero(1, 1);
  for (const auto& t : terms) {
    detail::require(t.rows() == 1 && t.cols() == 1, "add_scalars: expects 1x1 terms");
    out(0, 0) += t.item();
  }
  return make_op_n<T>(std::move(out), terms, [](Node<T>& self) {
    for (auto& p : self.parents) detail::accumulate(*p, self.grad);
  });
}

}  // namespace xview::nn
