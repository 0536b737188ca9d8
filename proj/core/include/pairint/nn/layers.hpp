#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pairint/nn/tensor.hpp"

namespace pairint::nn {

enum class Mode { Train, Eval };

template <class T>
struct ParamRef {
  std::string name;
  Tensor<T>* value = nullptr;
  Tensor<T>* grad = nullptr;
};

template <class T>
struct BufferRef {
  std::string name;
  Tensor<T>* value = nullptr;
};

/// One entry of a network description for FLOPs accounting.
struct LayerDesc {
  std::string kind;
  std::size_t in = 0;
  std::size_t out = 0;
};

/// Forward-pass FLOPs: linear 2*in*out + out, batchnorm/relu/silu 4*out,
/// elementwise kinds one per element per operation, dropout 0.
std::uint64_t count_flops(std::span<const LayerDesc> layers);

template <class T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual const char* kind() const = 0;
  virtual std::size_t in_features() const = 0;
  virtual std::size_t out_features() const = 0;
  /// Train mode caches what backward needs; eval mode drops the cache.
  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng) = 0;
  /// Accumulates parameter gradients and returns the input gradient.
  virtual Tensor<T> backward(const Tensor<T>& grad) = 0;
  virtual void collect(const std::string& prefix, std::vector<ParamRef<T>>& params,
                       std::vector<BufferRef<T>>& buffers) {
    (void)prefix, (void)params, (void)buffers;
  }
  virtual void describe(std::vector<LayerDesc>& out) const { out.push_back({kind(), in_features(), out_features()}); }
  virtual void init(Rng& rng) { (void)rng; }
};

namespace detail {

inline void no_cache(const char* kind) {
  throw Error(ErrorCode::NoCachedForward, std::string(kind) + ": backward called without a train-mode forward");
}

template <class T>
void check_grad(const Tensor<T>& g, const Tensor<T>& ref, const char* kind) {
  if (g.shape != ref.shape) {
    throw Error(ErrorCode::ShapeMismatch, std::string(kind) + ": gradient shape " + shape_string(g.shape) +
                                              " does not match output " + shape_string(ref.shape));
  }
}

}  // namespace detail

template <class T>
class Linear final : public Layer<T> {
 public:
  Linear(std::size_t in, std::size_t out)
      : weight({out, in}), bias({out}), weight_grad({out, in}), bias_grad({out}), in_(in), out_(out) {}

  const char* kind() const override { return "linear"; }
  std::size_t in_features() const override { return in_; }
  std::size_t out_features() const override { return out_; }

  /// Uniform(-1/sqrt(in), 1/sqrt(in)) for weights and bias.
  void init(Rng& rng) override {
    const double k = 1.0 / std::sqrt(static_cast<double>(in_));
    for (auto& v : weight.data) v = static_cast<T>(uniform(rng, -k, k));
    for (auto& v : bias.data) v = static_cast<T>(uniform(rng, -k, k));
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng&) override {
    require_cols(x, in_, "linear");
    Tensor<T> y({x.rows(), out_});
    linear_forward(x.data.data(), weight.data.data(), bias.data.data(), y.data.data(), x.rows(), in_, out_);
    cached_ = mode == Mode::Train;
    if (cached_) {
      input_ = x;
    } else {
      input_ = {};
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    if (!cached_) detail::no_cache(kind());
    require_cols(g, out_, "linear backward");
    if (g.rows() != input_.rows()) throw Error(ErrorCode::ShapeMismatch, "linear backward: batch size changed");
    Tensor<T> dx({g.rows(), in_});
    linear_backward(input_.data.data(), weight.data.data(), g.data.data(), weight_grad.data.data(),
                    bias_grad.data.data(), dx.data.data(), g.rows(), in_, out_);
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& params, std::vector<BufferRef<T>>&) override {
    params.push_back({prefix + "weight", &weight, &weight_grad});
    params.push_back({prefix + "bias", &bias, &bias_grad});
  }

  Tensor<T> weight, bias, weight_grad, bias_grad;

 private:
  std::size_t in_, out_;
  Tensor<T> input_;
  bool cached_ = false;
};

template <class T>
class ReLU final : public Layer<T> {
 public:
  explicit ReLU(std::size_t n) : n_(n) {}
  const char* kind() const override { return "relu"; }
  std::size_t in_features() const override { return n_; }
  std::size_t out_features() const override { return n_; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng&) override {
    require_cols(x, n_, "relu");
    Tensor<T> y = x;
    for (auto& v : y.data) v = v > T(0) ? v : T(0);
    cached_ = mode == Mode::Train;
    input_ = cached_ ? x : Tensor<T>{};
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    if (!cached_) detail::no_cache(kind());
    detail::check_grad(g, input_, kind());
    Tensor<T> dx = g;
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (!(input_.data[i] > T(0))) dx.data[i] = T(0);
    }
    return dx;
  }

 private:
  std::size_t n_;
  Tensor<T> input_;
  bool cached_ = false;
};

template <class T>
class SiLU final : public Layer<T> {
 public:
  explicit SiLU(std::size_t n) : n_(n) {}
  const char* kind() const override { return "silu"; }
  std::size_t in_features() const override { return n_; }
  std::size_t out_features() const override { return n_; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng&) override {
    require_cols(x, n_, "silu");
    Tensor<T> y = x;
    cached_ = mode == Mode::Train;
    if (cached_) {
      input_ = x;
      sig_ = Tensor<T>(x.shape);
    } else {
      input_ = {};
      sig_ = {};
    }
    for (std::size_t i = 0; i < y.size(); ++i) {
      const T s = T(1) / (T(1) + std::exp(-x.data[i]));
      y.data[i] = x.data[i] * s;
      if (cached_) sig_.data[i] = s;
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    if (!cached_) detail::no_cache(kind());
    detail::check_grad(g, input_, kind());
    Tensor<T> dx = g;
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const T s = sig_.data[i];
      dx.data[i] *= s * (T(1) + input_.data[i] * (T(1) - s));
    }
    return dx;
  }

 private:
  std::size_t n_;
  Tensor<T> input_, sig_;
  bool cached_ = false;
};

template <class T>
class BatchNorm1d final : public Layer<T> {
 public:
  explicit BatchNorm1d(std::size_t n, double momentum = 0.1, double eps = 1e-5)
      : gamma({n}, T(1)),
        beta({n}),
        gamma_grad({n}),
        beta_grad({n}),
        running_mean({n}),
        running_var({n}, T(1)),
        n_(n),
        momentum_(momentum),
        eps_(eps) {
    if (!(eps > 0.0)) throw Error(ErrorCode::InvalidParams, "batchnorm eps must be positive");
  }

  const char* kind() const override { return "batchnorm"; }
  std::size_t in_features() const override { return n_; }
  std::size_t out_features() const override { return n_; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng&) override {
    require_cols(x, n_, "batchnorm");
    const std::size_t batch = x.rows();
    cached_ = mode == Mode::Train;
    // A single-sample batch has no variance to normalize by; it uses the running statistics.
    batch_stats_ = cached_ && batch > 1;
    inv_std_.assign(n_, T(0));
    std::vector<T> mean(n_);
    if (batch_stats_) {
      for (std::size_t c = 0; c < n_; ++c) {
        double s = 0.0;
        for (std::size_t b = 0; b < batch; ++b) s += x(b, c);
        const double mu = s / static_cast<double>(batch);
        double ss = 0.0;
        for (std::size_t b = 0; b < batch; ++b) ss += (x(b, c) - mu) * (x(b, c) - mu);
        const double var = ss / static_cast<double>(batch);
        mean[c] = static_cast<T>(mu);
        inv_std_[c] = static_cast<T>(1.0 / std::sqrt(var + eps_));
        const double unbiased = ss / static_cast<double>(batch - 1);
        running_mean.data[c] = static_cast<T>((1.0 - momentum_) * running_mean.data[c] + momentum_ * mu);
        running_var.data[c] = static_cast<T>((1.0 - momentum_) * running_var.data[c] + momentum_ * unbiased);
      }
    } else {
      for (std::size_t c = 0; c < n_; ++c) {
        mean[c] = running_mean.data[c];
        inv_std_[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var.data[c]) + eps_));
      }
    }
    Tensor<T> xhat(x.shape);
    Tensor<T> y(x.shape);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < n_; ++c) {
        const T h = (x(b, c) - mean[c]) * inv_std_[c];
        xhat(b, c) = h;
        y(b, c) = gamma.data[c] * h + beta.data[c];
      }
    }
    xhat_ = cached_ ? std::move(xhat) : Tensor<T>{};
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    if (!cached_) detail::no_cache(kind());
    detail::check_grad(g, xhat_, kind());
    const std::size_t batch = g.rows();
    Tensor<T> dx(g.shape);
    for (std::size_t c = 0; c < n_; ++c) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        sum_g += g(b, c);
        sum_gx += g(b, c) * xhat_(b, c);
      }
      gamma_grad.data[c] += static_cast<T>(sum_gx);
      beta_grad.data[c] += static_cast<T>(sum_g);
      const double k = static_cast<double>(gamma.data[c]) * inv_std_[c];
      if (batch_stats_) {
        const double nb = static_cast<double>(batch);
        for (std::size_t b = 0; b < batch; ++b) {
          dx(b, c) = static_cast<T>(k * (g(b, c) - sum_g / nb - xhat_(b, c) * sum_gx / nb));
        }
      } else {
        for (std::size_t b = 0; b < batch; ++b) dx(b, c) = static_cast<T>(k * g(b, c));
      }
    }
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& params,
               std::vector<BufferRef<T>>& buffers) override {
    params.push_back({prefix + "gamma", &gamma, &gamma_grad});
    params.push_back({prefix + "beta", &beta, &beta_grad});
    buffers.push_back({prefix + "running_mean", &running_mean});
    buffers.push_back({prefix + "running_var", &running_var});
  }

  Tensor<T> gamma, beta, gamma_grad, beta_grad, running_mean, running_var;

 private:
  std::size_t n_;
  double momentum_, eps_;
  std::vector<T> inv_std_;
  Tensor<T> xhat_;
  bool cached_ = false;
  bool batch_stats_ = false;
};

template <class T>
class Dropout final : public Layer<T> {
 public:
  Dropout(std::size_t n, double p) : n_(n), p_(p) {
    if (!(p >= 0.0 && p < 1.0)) throw Error(ErrorCode::InvalidParams, "dropout probability must be in [0, 1)");
  }
  const char* kind() const override { return "dropout"; }
  std::size_t in_features() const override { return n_; }
  std::size_t out_features() const override { return n_; }
  double p() const noexcept { return p_; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng) override {
    require_cols(x, n_, "dropout");
    cached_ = mode == Mode::Train;
    if (!cached_) {
      mask_ = {};
      return x;
    }
    mask_ = Tensor<T>(x.shape);
    const T keep = static_cast<T>(1.0 / (1.0 - p_));
    Tensor<T> y = x;
    for (std::size_t i = 0; i < y.size(); ++i) {
      mask_.data[i] = (p_ > 0.0 && uniform01(rng) < p_) ? T(0) : keep;
      y.data[i] *= mask_.data[i];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    if (!cached_) detail::no_cache(kind());
    detail::check_grad(g, mask_, kind());
    Tensor<T> dx = g;
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] *= mask_.data[i];
    return dx;
  }

 private:
  std::size_t n_;
  double p_;
  Tensor<T> mask_;
  bool cached_ = false;
};

/// T(g) = (g + b) * s * w with b = 0, s = w = 1 at construction.
template <class T>
class FeatureReweight final : public Layer<T> {
 public:
  explicit FeatureReweight(std::size_t n)
      : shift({n}), scale({n}, T(1)), weight({n}, T(1)), shift_grad({n}), scale_grad({n}), weight_grad({n}), n_(n) {}

  const char* kind() const override { return "reweight"; }
  std::size_t in_features() const override { return n_; }
  std::size_t out_features() const override { return n_; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng&) override {
    require_cols(x, n_, "reweight");
    Tensor<T> y(x.shape);
    for (std::size_t b = 0; b < x.rows(); ++b) {
      for (std::size_t c = 0; c < n_; ++c) y(b, c) = (x(b, c) + shift.data[c]) * scale.data[c] * weight.data[c];
    }
    cached_ = mode == Mode::Train;
    input_ = cached_ ? x : Tensor<T>{};
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    if (!cached_) detail::no_cache(kind());
    detail::check_grad(g, input_, kind());
    Tensor<T> dx(g.shape);
    for (std::size_t b = 0; b < g.rows(); ++b) {
      for (std::size_t c = 0; c < n_; ++c) {
        const T u = input_(b, c) + shift.data[c];
        const T sw = scale.data[c] * weight.data[c];
        shift_grad.data[c] += g(b, c) * sw;
        scale_grad.data[c] += g(b, c) * u * weight.data[c];
        weight_grad.data[c] += g(b, c) * u * scale.data[c];
        dx(b, c) = g(b, c) * sw;
      }
    }
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& params, std::vector<BufferRef<T>>&) override {
    params.push_back({prefix + "b", &shift, &shift_grad});
    params.push_back({prefix + "s", &scale, &scale_grad});
    params.push_back({prefix + "w", &weight, &weight_grad});
  }

  Tensor<T> shift, scale, weight, shift_grad, scale_grad, weight_grad;

 private:
  std::size_t n_;
  Tensor<T> input_;
  bool cached_ = false;
};

/// Fixed z-scoring with stored statistics; deviations below 1e-8 only center.
template <class T>
class Standardize final : public Layer<T> {
 public:
  explicit Standardize(std::size_t n) : mean({n}), stddev({n}, T(1)), n_(n) {}

  const char* kind() const override { return "standardize"; }
  std::size_t in_features() const override { return n_; }
  std::size_t out_features() const override { return n_; }

  void set(std::span<const double> m, std::span<const double> s) {
    if (m.size() != n_ || s.size() != n_) {
      throw Error(ErrorCode::StatsDimensionMismatch, "standardization statistics have the wrong dimension");
    }
    for (std::size_t c = 0; c < n_; ++c) {
      mean.data[c] = static_cast<T>(m[c]);
      stddev.data[c] = static_cast<T>(s[c]);
    }
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng&) override {
    require_cols(x, n_, "standardize");
    Tensor<T> y(x.shape);
    for (std::size_t b = 0; b < x.rows(); ++b) {
      for (std::size_t c = 0; c < n_; ++c) y(b, c) = (x(b, c) - mean.data[c]) / divisor(c);
    }
    cached_ = mode == Mode::Train;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    if (!cached_) detail::no_cache(kind());
    require_cols(g, n_, "standardize backward");
    Tensor<T> dx(g.shape);
    for (std::size_t b = 0; b < g.rows(); ++b) {
      for (std::size_t c = 0; c < n_; ++c) dx(b, c) = g(b, c) / divisor(c);
    }
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>&, std::vector<BufferRef<T>>& buffers) override {
    buffers.push_back({prefix + "mean", &mean});
    buffers.push_back({prefix + "std", &stddev});
  }

  Tensor<T> mean, stddev;

 private:
  T divisor(std::size_t c) const { return stddev.data[c] >= T(1e-8) ? stddev.data[c] : T(1); }

  std::size_t n_;
  bool cached_ = false;
};

template <class T>
class Sequential final : public Layer<T> {
 public:
  Sequential() = default;

  template <class L, class... Args>
  L& add(std::string name, Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    if (!layers_.empty() && layers_.back().second->out_features() != ref.in_features()) {
      throw Error(ErrorCode::ShapeMismatch, "sequential: layer '" + name + "' expects " +
                                                std::to_string(ref.in_features()) + " inputs, previous layer gives " +
                                                std::to_string(layers_.back().second->out_features()));
    }
    layers_.emplace_back(std::move(name), std::move(layer));
    return ref;
  }

  const char* kind() const override { return "sequential"; }
  std::size_t in_features() const override { return layers_.empty() ? 0 : layers_.front().second->in_features(); }
  std::size_t out_features() const override { return layers_.empty() ? 0 : layers_.back().second->out_features(); }
  std::size_t size() const noexcept { return layers_.size(); }
  Layer<T>& at(std::size_t i) { return *layers_.at(i).second; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng) override {
    Tensor<T> h = x;
    for (auto& [name, layer] : layers_) h = layer->forward(h, mode, rng);
    return h;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> d = g;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) d = it->second->backward(d);
    return d;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& params,
               std::vector<BufferRef<T>>& buffers) override {
    for (auto& [name, layer] : layers_) layer->collect(prefix + name + ".", params, buffers);
  }

  void describe(std::vector<LayerDesc>& out) const override {
    for (const auto& [name, layer] : layers_) layer->describe(out);
  }

  void init(Rng& rng) override {
    for (auto& [name, layer] : layers_) layer->init(rng);
  }

 private:
  std::vector<std::pair<std::string, std::unique_ptr<Layer<T>>>> layers_;
};

/// y = body(x) + shortcut(x); the shortcut is a learned projection when the
/// widths differ and the identity otherwise.
template <class T>
class Residual final : public Layer<T> {
 public:
  Residual(std::unique_ptr<Sequential<T>> body) : body_(std::move(body)) {
    if (body_->in_features() != body_->out_features()) {
      proj_ = std::make_unique<Linear<T>>(body_->in_features(), body_->out_features());
    }
  }

  const char* kind() const override { return "residual"; }
  std::size_t in_features() const override { return body_->in_features(); }
  std::size_t out_features() const override { return body_->out_features(); }
  bool has_projection() const noexcept { return proj_ != nullptr; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng) override {
    Tensor<T> y = body_->forward(x, mode, rng);
    const Tensor<T> s = proj_ ? proj_->forward(x, mode, rng) : x;
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += s.data[i];
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> dx = body_->backward(g);
    const Tensor<T> ds = proj_ ? proj_->backward(g) : g;
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += ds.data[i];
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& params,
               std::vector<BufferRef<T>>& buffers) override {
    body_->collect(prefix, params, buffers);
    if (proj_) proj_->collect(prefix + "proj.", params, buffers);
  }

  void describe(std::vector<LayerDesc>& out) const override {
    body_->describe(out);
    if (proj_) proj_->describe(out);
    out.push_back({"add", out_features(), out_features()});
  }

  void init(Rng& rng) override {
    body_->init(rng);
    if (proj_) proj_->init(rng);
  }

 private:
  std::unique_ptr<Sequential<T>> body_;
  std::unique_ptr<Linear<T>> proj_;
};

template <class T>
void zero_grad(std::span<const ParamRef<T>> params) {
  for (const auto& p : params) p.grad->fill(T(0));
}

template <class T>
std::size_t parameter_count(std::span<const ParamRef<T>> params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value->size();
  return n;
}

}  // namespace pairint::nn
