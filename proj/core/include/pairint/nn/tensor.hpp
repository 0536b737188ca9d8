#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pairint/error.hpp"

namespace pairint::nn {

/// The only random source used by the network code; always seeded explicitly.
using Rng = std::mt19937_64;

/// Independent seed for a named sub-stream (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Uniform double in [0, 1) built from the top 53 bits, identical on every platform.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

/// Uniform integer in [0, n) by rejection, platform independent.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % n;
}

/// Row-major dense tensor. Layers work on rank-2 (batch x features) tensors.
template <class T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, T fill = T(0))
      : shape(std::move(s)), data(count(shape), fill) {}

  static std::size_t count(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t size() const noexcept { return data.size(); }
  std::size_t rank() const noexcept { return shape.size(); }
  std::size_t rows() const noexcept { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const noexcept { return shape.size() < 2 ? 1 : shape[1]; }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data[r * cols() + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data[r * cols() + c]; }
  std::span<T> row(std::size_t r) noexcept { return {data.data() + r * cols(), cols()}; }
  std::span<const T> row(std::size_t r) const noexcept { return {data.data() + r * cols(), cols()}; }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

inline std::string shape_string(const std::vector<std::size_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

template <class T>
void require_cols(const Tensor<T>& t, std::size_t cols, const char* what) {
  if (t.rank() != 2 || t.cols() != cols) {
    throw Error(ErrorCode::ShapeMismatch,
                std::string(what) + " expects " + std::to_string(cols) + " features, got " + shape_string(t.shape));
  }
}

// Dense kernels. Matrices are row-major; `w` is (out x in).
// y[b, o] = sum_i x[b, i] * w[o, i] + bias[o]
void linear_forward(const float* x, const float* w, const float* bias, float* y, std::size_t batch, std::size_t in,
                    std::size_t out);
void linear_forward(const double* x, const double* w, const double* bias, double* y, std::size_t batch,
                    std::size_t in, std::size_t out);
// dw[o, i] += sum_b dy[b, o] * x[b, i]; dbias[o] += sum_b dy[b, o]; dx[b, i] = sum_o dy[b, o] * w[o, i]
void linear_backward(const float* x, const float* w, const float* dy, float* dw, float* dbias, float* dx,
                     std::size_t batch, std::size_t in, std::size_t out);
void linear_backward(const double* x, const double* w, const double* dy, double* dw, double* dbias, double* dx,
                     std::size_t batch, std::size_t in, std::size_t out);

}  // namespace pairint::nn
