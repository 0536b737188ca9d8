#include "pairint/nn/tensor.hpp"

#include <algorithm>

#include "../simd.hpp"

namespace pairint::nn {

namespace {

// Eight independent partial sums so the loop vectorizes without reassociation.
template <class T>
inline T dot(const T* a, const T* b, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  }
  for (std::size_t j = 0; i < n; ++i, ++j) acc[j] += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <class T>
inline void forward_impl(const T* x, const T* w, const T* bias, T* y, std::size_t batch, std::size_t in,
                         std::size_t out) {
  for (std::size_t b = 0; b < batch; ++b) {
    const T* xr = x + b * in;
    T* yr = y + b * out;
    for (std::size_t o = 0; o < out; ++o) yr[o] = dot(xr, w + o * in, in) + (bias ? bias[o] : T(0));
  }
}

template <class T>
inline void backward_impl(const T* x, const T* w, const T* dy, T* dw, T* dbias, T* dx, std::size_t batch,
                          std::size_t in, std::size_t out) {
  if (dx) std::fill(dx, dx + batch * in, T(0));
  for (std::size_t b = 0; b < batch; ++b) {
    const T* xr = x + b * in;
    const T* dyr = dy + b * out;
    T* dxr = dx ? dx + b * in : nullptr;
    for (std::size_t o = 0; o < out; ++o) {
      const T g = dyr[o];
      if (dbias) dbias[o] += g;
      if (g == T(0)) continue;
      T* dwr = dw + o * in;
      const T* wr = w + o * in;
      for (std::size_t i = 0; i < in; ++i) dwr[i] += g * xr[i];
      if (dxr) {
        for (std::size_t i = 0; i < in; ++i) dxr[i] += g * wr[i];
      }
    }
  }
}

}  // namespace

PAIRINT_HOT void linear_forward(const float* x, const float* w, const float* bias, float* y, std::size_t batch,
                                std::size_t in, std::size_t out) {
  forward_impl(x, w, bias, y, batch, in, out);
}

PAIRINT_HOT void linear_forward(const double* x, const double* w, const double* bias, double* y, std::size_t batch,
                                std::size_t in, std::size_t out) {
  forward_impl(x, w, bias, y, batch, in, out);
}

PAIRINT_HOT void linear_backward(const float* x, const float* w, const float* dy, float* dw, float* dbias, float* dx,
                                 std::size_t batch, std::size_t in, std::size_t out) {
  backward_impl(x, w, dy, dw, dbias, dx, batch, in, out);
}

PAIRINT_HOT void linear_backward(const double* x, const double* w, const double* dy, double* dw, double* dbias,
                                 double* dx, std::size_t batch, std::size_t in, std::size_t out) {
  backward_impl(x, w, dy, dw, dbias, dx, batch, in, out);
}

}  // namespace pairint::nn
