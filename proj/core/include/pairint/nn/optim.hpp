#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "pairint/nn/layers.hpp"

namespace pairint::nn {

struct FocalLossCfg {
  double gamma = 2.0;
  /// Per-class weights; empty means all ones.
  std::vector<double> class_weights;
};

template <class T>
struct LossResult {
  double loss = 0.0;
  /// d(loss)/d(logits), already divided by the batch size.
  Tensor<T> grad;
};

/// Mean over the batch of -w_y (1 - p_y)^gamma log p_y with p = softmax(logits).
template <class T>
LossResult<T> focal_loss(const Tensor<T>& logits, std::span<const int> targets, const FocalLossCfg& cfg) {
  const std::size_t n = logits.rows();
  const std::size_t c = logits.cols();
  if (logits.rank() != 2 || targets.size() != n) {
    throw Error(ErrorCode::ShapeMismatch, "focal loss: logits " + shape_string(logits.shape) + " vs " +
                                              std::to_string(targets.size()) + " targets");
  }
  if (!cfg.class_weights.empty() && cfg.class_weights.size() != c) {
    throw Error(ErrorCode::ShapeMismatch, "focal loss: class weight count does not match logits");
  }
  if (!(cfg.gamma >= 0.0)) throw Error(ErrorCode::InvalidParams, "focal loss gamma must be non-negative");
  LossResult<T> out;
  out.grad = Tensor<T>(logits.shape);
  if (n == 0) return out;
  std::vector<double> p(c);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = targets[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw Error(ErrorCode::InvalidTarget, "target " + std::to_string(y) + " outside [0, " + std::to_string(c) + ")");
    }
    double mx = logits(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(logits(i, j)));
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      p[j] = std::exp(static_cast<double>(logits(i, j)) - mx);
      z += p[j];
    }
    for (auto& v : p) v /= z;
    const double log_q = static_cast<double>(logits(i, y)) - mx - std::log(z);
    const double q = p[y];
    const double w = cfg.class_weights.empty() ? 1.0 : cfg.class_weights[y];
    const double one_minus = std::max(0.0, 1.0 - q);
    const double focus = cfg.gamma == 0.0 ? 1.0 : std::pow(one_minus, cfg.gamma);
    total += -w * focus * log_q;
    // dL/dz_j = -w [(1-q)^g - g (1-q)^(g-1) q log q] (delta_yj - p_j)
    double slope = 0.0;
    if (cfg.gamma != 0.0 && one_minus > 0.0) slope = cfg.gamma * std::pow(one_minus, cfg.gamma - 1.0) * q * log_q;
    const double coef = -w * (focus - slope) / static_cast<double>(n);
    for (std::size_t j = 0; j < c; ++j) {
      const double delta = static_cast<std::size_t>(y) == j ? 1.0 : 0.0;
      out.grad(i, j) = static_cast<T>(coef * (delta - p[j]));
    }
  }
  out.loss = total / static_cast<double>(n);
  return out;
}

/// Inverse class frequency normalized to mean 1 over the classes present;
/// absent classes get weight 1.
std::vector<double> inverse_frequency_weights(std::span<const int> labels, int num_classes);

struct AdamWConfig {
  double lr = 1e-4;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AdamWState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Decoupled weight decay, then one bias-corrected Adam update.
template <class T>
void adamw_step(std::span<T> params, std::span<const T> grads, AdamWState<T>& state, double lr, double weight_decay) {
  if (params.size() != grads.size()) throw Error(ErrorCode::ShapeMismatch, "adamw: parameter/gradient size mismatch");
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw Error(ErrorCode::ShapeMismatch, "adamw: optimizer state does not match parameters");
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double theta = static_cast<double>(params[i]);
    const double g = static_cast<double>(grads[i]);
    theta -= lr * weight_decay * theta;
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    theta -= lr * mhat / (std::sqrt(vhat) + state.eps);
    params[i] = static_cast<T>(theta);
  }
}

/// AdamW over a fixed parameter list.
template <class T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  void step(std::span<const ParamRef<T>> params) {
    if (states_.empty()) {
      states_.resize(params.size());
      for (auto& s : states_) {
        s.beta1 = cfg_.beta1;
        s.beta2 = cfg_.beta2;
        s.eps = cfg_.eps;
      }
    }
    if (states_.size() != params.size()) throw Error(ErrorCode::ShapeMismatch, "adamw: parameter list changed");
    for (std::size_t k = 0; k < params.size(); ++k) {
      adamw_step<T>(params[k].value->data, params[k].grad->data, states_[k], cfg_.lr, cfg_.weight_decay);
    }
  }

  const AdamWConfig& config() const noexcept { return cfg_; }

 private:
  AdamWConfig cfg_;
  std::vector<AdamWState<T>> states_;
};

/// Indices drawn with replacement, probability proportional to 1/count(class):
/// a class is drawn uniformly, then a member uniformly.
std::vector<std::size_t> weighted_sampler(std::span<const int> labels, Rng& rng, std::size_t n);

}  // namespace pairint::nn
