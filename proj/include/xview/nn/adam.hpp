#pragma once

#include "xview/nn/layers.hpp"

#include <cmath>
#include <vector>

namespace xview::nn {

struct AdamOptions {
  double learning_rate = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // decoupled (AdamW)
  double clip_norm = 1.0;     // <= 0 disables global-norm clipping
};

/// Adam with decoupled weight decay over a ParameterSet.
template <typename T>
class Adam {
 public:
  Adam(ParameterSet<T>& params, AdamOptions options) : params_(params), options_(options) {
    for (const auto& e : params_.entries()) {
      first_.push_back(Matrix<T>::Zero(e.second.rows(), e.second.cols()));
      second_.push_back(Matrix<T>::Zero(e.second.rows(), e.second.cols()));
    }
  }

  /// Applies one update from the accumulated gradients and returns the
  /// pre-clipping global gradient norm.
  double step() {
    ++steps_;
    double sq = 0.0;
    for (const auto& e : params_.entries()) {
      if (e.second.requires_grad() && e.second.node()->has_grad()) {
        sq += static_cast<double>(e.second.node()->grad.squaredNorm());
      }
    }
    const double norm = std::sqrt(sq);
    double factor = 1.0;
    if (options_.clip_norm > 0.0 && norm > options_.clip_norm) factor = options_.clip_norm / norm;

    const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
    const T lr = static_cast<T>(options_.learning_rate);
    const T b1 = static_cast<T>(options_.beta1);
    const T b2 = static_cast<T>(options_.beta2);
    for (std::size_t i = 0; i < params_.entries().size(); ++i) {
      auto& var = params_.entries()[i].second;
      if (!var.requires_grad() || !var.node()->has_grad()) continue;
      const Matrix<T> g = var.node()->grad * static_cast<T>(factor);
      first_[i] = b1 * first_[i] + (T(1) - b1) * g;
      second_[i] = b2 * second_[i] + (T(1) - b2) * g.cwiseProduct(g);
      auto& w = var.mutable_value();
      if (options_.weight_decay > 0.0) w *= (T(1) - lr * static_cast<T>(options_.weight_decay));
      const auto m_hat = first_[i].array() / static_cast<T>(bc1);
      const auto v_hat = second_[i].array() / static_cast<T>(bc2);
      w.array() -= lr * m_hat / (v_hat.sqrt() + static_cast<T>(options_.epsilon));
    }
    return norm;
  }

  long steps() const { return steps_; }

 private:
  ParameterSet<T>& params_;
  AdamOptions options_;
  std::vector<Matrix<T>> first_;
  std::vector<Matrix<T>> second_;
  long steps_ = 0;
};

}  // namespace xview::nn
