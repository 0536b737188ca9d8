#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "pairint/nn/layers.hpp"
#include "pairint/nn/tensor.hpp"

namespace gradcheck {

using namespace pairint::nn;

inline Tensor<double> random_tensor(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Tensor<double> t({rows, cols});
  for (auto& v : t.data) v = uniform(rng, -scale, scale);
  return t;
}

inline double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

inline double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-2}); }

// Central differences on loss = <forward(x), r>. The forward closure must
// reseed its own randomness so every evaluation sees the same dropout mask.
// Up to `per_tensor` entries of each tensor are probed.
struct GradCheck {
  std::function<Tensor<double>(const Tensor<double>&)> forward;
  std::function<Tensor<double>(const Tensor<double>&)> backward;  // returns dx, or empty when unavailable
  std::vector<ParamRef<double>> params;
  double step = 1e-5;
  std::size_t per_tensor = 24;

  double run(Tensor<double> x, Rng& rng) {
    const Tensor<double> y0 = forward(x);
    Tensor<double> r(y0.shape);
    for (auto& v : r.data) v = uniform(rng, -1, 1);
    for (auto& p : params) p.grad->fill(0);
    forward(x);
    const Tensor<double> dx = backward(r);
    double worst = 0;
    auto probe = [&](double& slot, double analytic) {
      const double keep = slot;
      slot = keep + step;
      const double up = dot(forward(x), r);
      slot = keep - step;
      const double down = dot(forward(x), r);
      slot = keep;
      worst = std::max(worst, rel(analytic, (up - down) / (2 * step)));
    };
    for (auto& p : params) {
      const std::size_t n = p.value->size();
      for (std::size_t k = 0; k < std::min(n, per_tensor); ++k) {
        const std::size_t i = n <= per_tensor ? k : uniform_index(rng, n);
        probe(p.value->data[i], p.grad->data[i]);
      }
    }
    if (!dx.data.empty()) {
      for (std::size_t k = 0; k < std::min(x.size(), per_tensor); ++k) {
        const std::size_t i = x.size() <= per_tensor ? k : uniform_index(rng, x.size());
        probe(x.data[i], dx.data[i]);
      }
    }
    return worst;
  }
};

inline double check_layer(Layer<double>& layer, std::size_t batch, Rng& rng, double scale = 1.0) {
  layer.init(rng);
  std::vector<ParamRef<double>> params;
  std::vector<BufferRef<double>> buffers;
  layer.collect("", params, buffers);
  GradCheck gc;
  gc.params = params;
  gc.forward = [&](const Tensor<double>& x) {
    Rng local(77);
    return layer.forward(x, Mode::Train, local);
  };
  gc.backward = [&](const Tensor<double>& g) { return layer.backward(g); };
  return gc.run(random_tensor(rng, batch, layer.in_features(), scale), rng);
}

}  // namespace gradcheck
