#include "pairint/flow.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "pairint/binary_io.hpp"
#include "pairint/error.hpp"
#include "simd.hpp"

namespace pairint {

namespace {

// Levels smaller than this are not added to the pyramid.
constexpr int kMinLevelSize = 32;
// Images are expanded on a [0, 255] intensity scale so that the solver's
// determinant regularizer keeps its usual magnitude.
constexpr float kIntensityScale = 255.0f;
constexpr double kDetRegularizer = 1e-3;

std::vector<float> gaussian_kernel(int radius, double sigma) {
  std::vector<float> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-(i * i) / (2.0 * sigma * sigma));
    k[i + radius] = static_cast<float>(v);
    sum += v;
  }
  for (auto& v : k) v = static_cast<float>(v / sum);
  return k;
}

// Separable convolution with a symmetric kernel and edge replication.
PAIRINT_HOT void blur_plane(std::vector<float>& plane, int w, int h, const std::vector<float>& kernel,
                std::vector<float>& scratch) {
  const int r = static_cast<int>(kernel.size()) / 2;
  scratch.resize(plane.size());
  // vertical pass: whole-row axpy, folded around the center tap
  for (int y = 0; y < h; ++y) {
    float* out = &scratch[static_cast<std::size_t>(y) * w];
    const float* mid = &plane[static_cast<std::size_t>(y) * w];
    const float g0 = kernel[r];
    for (int x = 0; x < w; ++x) out[x] = g0 * mid[x];
    for (int k = 1; k <= r; ++k) {
      const float* up = &plane[static_cast<std::size_t>(std::max(y - k, 0)) * w];
      const float* dn = &plane[static_cast<std::size_t>(std::min(y + k, h - 1)) * w];
      const float g = kernel[r + k];
      for (int x = 0; x < w; ++x) out[x] += g * (up[x] + dn[x]);
    }
  }
  // horizontal pass over a replicate-padded copy of each row
  std::vector<float> row(static_cast<std::size_t>(w) + 2 * r);
  for (int y = 0; y < h; ++y) {
    const float* src = &scratch[static_cast<std::size_t>(y) * w];
    std::copy(src, src + w, row.begin() + r);
    std::fill(row.begin(), row.begin() + r, src[0]);
    std::fill(row.begin() + r + w, row.end(), src[w - 1]);
    float* out = &plane[static_cast<std::size_t>(y) * w];
    const float* c = row.data() + r;
    const float g0 = kernel[r];
    for (int x = 0; x < w; ++x) out[x] = g0 * c[x];
    for (int k = 1; k <= r; ++k) {
      const float g = kernel[r + k];
      for (int x = 0; x < w; ++x) out[x] += g * (c[x - k] + c[x + k]);
    }
  }
}

PAIRINT_HOT std::vector<float> resize_plane(const std::vector<float>& src, int sw, int sh, int dw, int dh) {
  std::vector<float> dst(static_cast<std::size_t>(dw) * dh);
  const double rx = static_cast<double>(sw) / dw;
  const double ry = static_cast<double>(sh) / dh;
  std::vector<int> xi0(dw), xi1(dw);
  std::vector<float> ax(dw);
  for (int x = 0; x < dw; ++x) {
    const double fx = std::clamp((x + 0.5) * rx - 0.5, 0.0, static_cast<double>(sw - 1));
    xi0[x] = static_cast<int>(fx);
    xi1[x] = std::min(xi0[x] + 1, sw - 1);
    ax[x] = static_cast<float>(fx - xi0[x]);
  }
  for (int y = 0; y < dh; ++y) {
    const double fy = std::clamp((y + 0.5) * ry - 0.5, 0.0, static_cast<double>(sh - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, sh - 1);
    const float ay = static_cast<float>(fy - y0);
    const float* r0 = &src[static_cast<std::size_t>(y0) * sw];
    const float* r1 = &src[static_cast<std::size_t>(y1) * sw];
    float* out = &dst[static_cast<std::size_t>(y) * dw];
    for (int x = 0; x < dw; ++x) {
      const float top = r0[xi0[x]] + ax[x] * (r0[xi1[x]] - r0[xi0[x]]);
      const float bot = r1[xi0[x]] + ax[x] * (r1[xi1[x]] - r1[xi0[x]]);
      out[x] = top + ay * (bot - top);
    }
  }
  return dst;
}

// Gauss-Jordan inverse of a small dense matrix; the expansion's Gram matrix
// is symmetric positive definite so no pivoting failure is expected.
std::array<std::array<double, 6>, 6> invert6(std::array<std::array<double, 6>, 6> a) {
  std::array<std::array<double, 6>, 6> inv{};
  for (int i = 0; i < 6; ++i) inv[i][i] = 1.0;
  for (int col = 0; col < 6; ++col) {
    int piv = col;
    for (int r = col + 1; r < 6; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    }
    if (std::abs(a[piv][col]) < 1e-300) throw Error(ErrorCode::InvalidParams, "singular expansion basis");
    std::swap(a[piv], a[col]);
    std::swap(inv[piv], inv[col]);
    const double d = a[col][col];
    for (int c = 0; c < 6; ++c) {
      a[col][c] /= d;
      inv[col][c] /= d;
    }
    for (int r = 0; r < 6; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      if (f == 0.0) continue;
      for (int c = 0; c < 6; ++c) {
        a[r][c] -= f * a[col][c];
        inv[r][c] -= f * inv[col][c];
      }
    }
  }
  return inv;
}

GrayImage level_image(const GrayImage& img, double scale, int w, int h) {
  GrayImage out;
  out.width = w;
  out.height = h;
  if (w == img.width && h == img.height) {
    out.data = img.data;
  } else {
    std::vector<float> blurred = img.data;
    const double sigma = (1.0 / scale - 1.0) * 0.5;
    const int ksize = std::max(3, static_cast<int>(std::lround(sigma * 5.0)) | 1);
    std::vector<float> scratch;
    blur_plane(blurred, img.width, img.height, gaussian_kernel(ksize / 2, sigma), scratch);
    out.data = resize_plane(blurred, img.width, img.height, w, h);
  }
  for (auto& v : out.data) v *= kIntensityScale;
  return out;
}

struct LevelSize {
  int width;
  int height;
  double scale;
};

std::vector<LevelSize> pyramid_sizes(int width, int height, const FarnebackParams& p) {
  std::vector<LevelSize> sizes{{width, height, 1.0}};
  double scale = 1.0;
  for (int k = 1; k < p.levels; ++k) {
    scale *= p.pyramid_scale;
    const int w = static_cast<int>(std::lround(width * scale));
    const int h = static_cast<int>(std::lround(height * scale));
    if (w < kMinLevelSize || h < kMinLevelSize || std::min(w, h) < p.poly_n) break;
    sizes.push_back({w, h, scale});
  }
  return sizes;
}

// Builds the per-pixel normal equations G d = h of the displacement update
// from two expansions and the current flow estimate. Layout: g11 g12 g22 h1 h2.
PAIRINT_HOT void update_matrices(const PolyCoeffs& r0, const PolyCoeffs& r1, const FlowField& flow,
                                 std::array<std::vector<float>, 5>& m) {
  const int w = flow.width;
  const int h = flow.height;
  for (auto& plane : m) plane.resize(static_cast<std::size_t>(w) * h);
  float* __restrict g11 = m[0].data();
  float* __restrict g12 = m[1].data();
  float* __restrict g22 = m[2].data();
  float* __restrict h1 = m[3].data();
  float* __restrict h2 = m[4].data();
  const float* __restrict p11 = r0.a11.data();
  const float* __restrict p12 = r0.a12.data();
  const float* __restrict p22 = r0.a22.data();
  const float* __restrict pb1 = r0.b1.data();
  const float* __restrict pb2 = r0.b2.data();
  const float* __restrict n11 = r1.a11.data();
  const float* __restrict n12 = r1.a12.data();
  const float* __restrict n22 = r1.a22.data();
  const float* __restrict nb1 = r1.b1.data();
  const float* __restrict nb2 = r1.b2.data();
  const float* __restrict fx = flow.fx.data();
  const float* __restrict fy = flow.fy.data();
  std::vector<int> idx(static_cast<std::size_t>(w));
  std::vector<float> offx(idx.size()), offy(idx.size());
  for (int y = 0; y < h; ++y) {
    const std::size_t row = static_cast<std::size_t>(y) * w;
    // Sample positions are rounded to the nearest pixel. The next frame's
    // coefficients are read there, so the prior displacement entering the
    // update is that integer offset.
    for (int x = 0; x < w; ++x) {
      const int sx = std::clamp(static_cast<int>(static_cast<float>(x) + fx[row + x] + 1024.5f) - 1024, 0, w - 1);
      const int sy = std::clamp(static_cast<int>(static_cast<float>(y) + fy[row + x] + 1024.5f) - 1024, 0, h - 1);
      idx[x] = sy * w + sx;
      offx[x] = static_cast<float>(sx - x);
      offy[x] = static_cast<float>(sy - y);
    }
    for (int x = 0; x < w; ++x) {
      const std::size_t i = row + x;
      const std::size_t j = static_cast<std::size_t>(idx[x]);
      const float a11 = 0.5f * (p11[i] + n11[j]);
      const float a12 = 0.5f * (p12[i] + n12[j]);
      const float a22 = 0.5f * (p22[i] + n22[j]);
      const float db1 = 0.5f * (pb1[i] - nb1[j]) + a11 * offx[x] + a12 * offy[x];
      const float db2 = 0.5f * (pb2[i] - nb2[j]) + a12 * offx[x] + a22 * offy[x];
      g11[i] = a11 * a11 + a12 * a12;
      g12[i] = a12 * (a11 + a22);
      g22[i] = a12 * a12 + a22 * a22;
      h1[i] = a11 * db1 + a12 * db2;
      h2[i] = a12 * db1 + a22 * db2;
    }
  }
}

PAIRINT_HOT void solve_flow(const std::array<std::vector<float>, 5>& m, FlowField& flow) {
  const std::size_t n = flow.fx.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double g11 = m[0][i], g12 = m[1][i], g22 = m[2][i], h1 = m[3][i], h2 = m[4][i];
    const double idet = 1.0 / (g11 * g22 - g12 * g12 + kDetRegularizer);
    flow.fx[i] = static_cast<float>((g22 * h1 - g12 * h2) * idet);
    flow.fy[i] = static_cast<float>((g11 * h2 - g12 * h1) * idet);
  }
}

// Default Gaussian sigma for an odd kernel size (same rule as common imaging libraries).
double window_sigma(int window) { return 0.3 * ((window - 1) * 0.5 - 1.0) + 0.8; }

}  // namespace

FlowField::FlowField(int w, int h, float ux, float uy)
    : width(w), height(h), fx(static_cast<std::size_t>(w) * h, ux), fy(static_cast<std::size_t>(w) * h, uy) {}

void FarnebackParams::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::InvalidParams, why); };
  if (!(pyramid_scale > 0.0 && pyramid_scale < 1.0)) fail("pyramid_scale must lie in (0, 1)");
  if (levels < 1) fail("levels must be >= 1");
  if (window < 1 || window % 2 == 0) fail("window must be a positive odd integer");
  if (iterations < 1) fail("iterations must be >= 1");
  if (poly_n < 3 || poly_n % 2 == 0) fail("poly_n must be an odd integer >= 3");
  if (!(poly_sigma > 0.0)) fail("poly_sigma must be positive");
}

PAIRINT_HOT PolyCoeffs polynomial_expansion(const GrayImage& img, int poly_n, double poly_sigma) {
  if (poly_n < 3 || poly_n % 2 == 0) throw Error(ErrorCode::InvalidParams, "poly_n must be an odd integer >= 3");
  if (!(poly_sigma > 0.0)) throw Error(ErrorCode::InvalidParams, "poly_sigma must be positive");
  if (img.empty() || std::min(img.width, img.height) < poly_n) {
    throw Error(ErrorCode::ImageTooSmall, "image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                                              " is smaller than poly_n=" + std::to_string(poly_n));
  }
  const int r = poly_n / 2;
  const int w = img.width;
  const int h = img.height;
  const std::vector<float> g = gaussian_kernel(r, poly_sigma);

  // Gram matrix of the basis {1, x, y, x^2, y^2, xy} under separable weights.
  double m0 = 0, m2 = 0, m4 = 0;
  for (int k = -r; k <= r; ++k) {
    const double gk = g[k + r];
    m0 += gk;
    m2 += gk * k * k;
    m4 += gk * k * k * k * k;
  }
  std::array<std::array<double, 6>, 6> gram{};
  gram[0][0] = m0 * m0;
  gram[1][1] = m2 * m0;
  gram[2][2] = m0 * m2;
  gram[0][3] = gram[3][0] = m2 * m0;
  gram[0][4] = gram[4][0] = m0 * m2;
  gram[3][3] = m4 * m0;
  gram[4][4] = m0 * m4;
  gram[3][4] = gram[4][3] = m2 * m2;
  gram[5][5] = m2 * m2;
  const auto ig = invert6(gram);

  PolyCoeffs out;
  out.width = w;
  out.height = h;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  for (auto* v : {&out.a11, &out.a12, &out.a22, &out.b1, &out.b2, &out.c}) v->resize(n);

  std::vector<float> v0(static_cast<std::size_t>(w) + 2 * r), v1(v0.size()), v2(v0.size());
  for (int y = 0; y < h; ++y) {
    // vertical moments of the signal for every column
    float* p0 = v0.data() + r;
    float* p1 = v1.data() + r;
    float* p2 = v2.data() + r;
    const float* mid = &img.data[static_cast<std::size_t>(y) * w];
    for (int x = 0; x < w; ++x) {
      p0[x] = g[r] * mid[x];
      p1[x] = 0.0f;
      p2[x] = 0.0f;
    }
    for (int k = 1; k <= r; ++k) {
      const float* up = &img.data[static_cast<std::size_t>(std::max(y - k, 0)) * w];
      const float* dn = &img.data[static_cast<std::size_t>(std::min(y + k, h - 1)) * w];
      const float gk = g[r + k];
      const float kk = static_cast<float>(k);
      for (int x = 0; x < w; ++x) {
        p0[x] += gk * (up[x] + dn[x]);
        p1[x] += gk * kk * (dn[x] - up[x]);
        p2[x] += gk * kk * kk * (up[x] + dn[x]);
      }
    }
    for (int k = 1; k <= r; ++k) {
      p0[-k] = p0[0];
      p1[-k] = p1[0];
      p2[-k] = p2[0];
      p0[w - 1 + k] = p0[w - 1];
      p1[w - 1 + k] = p1[w - 1];
      p2[w - 1 + k] = p2[w - 1];
    }
    // horizontal moments and the least-squares solve; the inverse Gram
    // matrix only couples {1, x^2, y^2}, the other coefficients are decoupled
    const float g0 = g[r];
    const float i00 = static_cast<float>(ig[0][0]), i03 = static_cast<float>(ig[0][3]),
                i04 = static_cast<float>(ig[0][4]), i11 = static_cast<float>(ig[1][1]),
                i22 = static_cast<float>(ig[2][2]), i30 = static_cast<float>(ig[3][0]),
                i33 = static_cast<float>(ig[3][3]), i34 = static_cast<float>(ig[3][4]),
                i40 = static_cast<float>(ig[4][0]), i43 = static_cast<float>(ig[4][3]),
                i44 = static_cast<float>(ig[4][4]), i55 = static_cast<float>(ig[5][5]);
    const std::size_t row = static_cast<std::size_t>(y) * w;
    float* oc = &out.c[row];
    float* ob1 = &out.b1[row];
    float* ob2 = &out.b2[row];
    float* oa11 = &out.a11[row];
    float* oa22 = &out.a22[row];
    float* oa12 = &out.a12[row];
    for (int x = 0; x < w; ++x) {
      float c1 = g0 * p0[x], cx = 0, cy = g0 * p1[x], cxx = 0, cyy = g0 * p2[x], cxy = 0;
      for (int k = 1; k <= r; ++k) {
        const float gk = g[r + k];
        const float fk = static_cast<float>(k);
        const float s0 = p0[x + k] + p0[x - k];
        c1 += gk * s0;
        cx += gk * fk * (p0[x + k] - p0[x - k]);
        cxx += gk * fk * fk * s0;
        cy += gk * (p1[x + k] + p1[x - k]);
        cxy += gk * fk * (p1[x + k] - p1[x - k]);
        cyy += gk * (p2[x + k] + p2[x - k]);
      }
      oc[x] = i00 * c1 + i03 * cxx + i04 * cyy;
      ob1[x] = i11 * cx;
      ob2[x] = i22 * cy;
      oa11[x] = i30 * c1 + i33 * cxx + i34 * cyy;
      oa22[x] = i40 * c1 + i43 * cxx + i44 * cyy;
      oa12[x] = 0.5f * i55 * cxy;
    }
  }
  return out;
}

FlowPyramid build_flow_pyramid(const GrayImage& img, const FarnebackParams& params) {
  params.validate();
  if (img.empty() || std::min(img.width, img.height) < params.poly_n) {
    throw Error(ErrorCode::ImageTooSmall, "image is smaller than poly_n");
  }
  FlowPyramid pyr;
  pyr.width = img.width;
  pyr.height = img.height;
  for (const auto& s : pyramid_sizes(img.width, img.height, params)) {
    pyr.levels.push_back(
        polynomial_expansion(level_image(img, s.scale, s.width, s.height), params.poly_n, params.poly_sigma));
  }
  return pyr;
}

FlowField estimate_flow(const FlowPyramid& prev, const FlowPyramid& next, const FarnebackParams& params) {
  params.validate();
  if (prev.width != next.width || prev.height != next.height || prev.levels.size() != next.levels.size()) {
    throw Error(ErrorCode::DimensionMismatch, "flow inputs have different dimensions");
  }
  const int ksize = params.window;
  const std::vector<float> win = gaussian_kernel(ksize / 2, window_sigma(ksize));
  // sized for the finest level up front so coarser levels do not reallocate
  const std::size_t full = static_cast<std::size_t>(prev.levels.front().width) * prev.levels.front().height;
  std::array<std::vector<float>, 5> m;
  for (auto& plane : m) plane.reserve(full);
  std::vector<float> scratch;
  scratch.reserve(full);

  FlowField flow;
  for (int lvl = static_cast<int>(prev.levels.size()) - 1; lvl >= 0; --lvl) {
    const PolyCoeffs& r0 = prev.levels[lvl];
    const PolyCoeffs& r1 = next.levels[lvl];
    if (flow.width == 0) {
      flow = FlowField(r0.width, r0.height);
    } else {
      FlowField up;
      up.width = r0.width;
      up.height = r0.height;
      up.fx = resize_plane(flow.fx, flow.width, flow.height, r0.width, r0.height);
      up.fy = resize_plane(flow.fy, flow.width, flow.height, r0.width, r0.height);
      const float sx = static_cast<float>(r0.width) / flow.width;
      const float sy = static_cast<float>(r0.height) / flow.height;
      for (auto& v : up.fx) v *= sx;
      for (auto& v : up.fy) v *= sy;
      flow = std::move(up);
    }
    for (int it = 0; it < params.iterations; ++it) {
      update_matrices(r0, r1, flow, m);
      for (auto& plane : m) blur_plane(plane, flow.width, flow.height, win, scratch);
      solve_flow(m, flow);
    }
  }
  return flow;
}

FlowField estimate_flow(const GrayImage& prev, const GrayImage& next, const FarnebackParams& params) {
  if (prev.width != next.width || prev.height != next.height) {
    throw Error(ErrorCode::DimensionMismatch, "flow inputs have different dimensions");
  }
  return estimate_flow(build_flow_pyramid(prev, params), build_flow_pyramid(next, params), params);
}

PixelRange box_pixels(const BBox& box, int width, int height) noexcept {
  auto lo = [](double v, int limit) { return std::clamp(static_cast<int>(std::ceil(v - 0.5)), 0, limit); };
  return {lo(box.x, width), lo(box.x + box.w, width), lo(box.y, height), lo(box.y + box.h, height)};
}

std::size_t PixelMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(on.begin(), on.end(), std::uint8_t{1}));
}

PixelMask box_union_mask(std::span<const BBox> boxes, int width, int height, int ring) {
  PixelMask mask(width, height);
  for (const auto& b : boxes) {
    PixelRange r = box_pixels(b, width, height);
    r.x0 = std::max(r.x0, ring);
    r.y0 = std::max(r.y0, ring);
    r.x1 = std::min(r.x1, width - ring);
    r.y1 = std::min(r.y1, height - ring);
    for (int y = r.y0; y < r.y1; ++y) {
      std::fill_n(&mask.on[static_cast<std::size_t>(y) * width + r.x0], std::max(0, r.x1 - r.x0), std::uint8_t{1});
    }
  }
  return mask;
}

double FlowStats::coherence() const { return std::sqrt(coh_c * coh_c + coh_s * coh_s); }

namespace {

struct StatsAccum {
  // Welford running mean / M2 keeps sigma exactly zero on constant fields
  double n = 0, mean_e = 0, m2_e = 0, sum_ax = 0, sum_ay = 0, sum_c = 0, sum_s = 0;

  void add(double fx, double fy) {
    const double e = std::sqrt(fx * fx + fy * fy);
    n += 1;
    const double delta = e - mean_e;
    mean_e += delta / n;
    m2_e += delta * (e - mean_e);
    sum_ax += std::abs(fx);
    sum_ay += std::abs(fy);
    if (e < kZeroFlowMagnitude) {
      sum_c += 1.0;
    } else {
      sum_c += fx / e;
      sum_s += fy / e;
    }
  }

  FlowStats finish() const {
    if (n == 0) throw Error(ErrorCode::EmptyMask, "flow statistics over an empty mask");
    FlowStats s;
    s.mu_mag = mean_e;
    s.sigma_mag = std::sqrt(std::max(0.0, m2_e / n));
    s.mean_abs_fx = sum_ax / n;
    s.mean_abs_fy = sum_ay / n;
    s.coh_c = sum_c / n;
    s.coh_s = sum_s / n;
    return s;
  }
};

}  // namespace

FlowStats flow_stats(const FlowField& flow, const PixelMask& mask) {
  if (mask.width != flow.width || mask.height != flow.height) {
    throw Error(ErrorCode::DimensionMismatch, "mask does not match flow dimensions");
  }
  StatsAccum acc;
  for (std::size_t i = 0; i < mask.on.size(); ++i) {
    if (mask.on[i]) acc.add(flow.fx[i], flow.fy[i]);
  }
  return acc.finish();
}

FlowStats flow_stats(const FlowField& flow, std::span<const BBox> boxes, int ring) {
  // Same pixel set and visiting order as box_union_mask, without materializing it.
  std::vector<PixelRange> ranges;
  PixelRange bound{flow.width, 0, flow.height, 0};
  for (const auto& b : boxes) {
    PixelRange r = box_pixels(b, flow.width, flow.height);
    r.x0 = std::max(r.x0, ring);
    r.y0 = std::max(r.y0, ring);
    r.x1 = std::min(r.x1, flow.width - ring);
    r.y1 = std::min(r.y1, flow.height - ring);
    if (r.empty()) continue;
    ranges.push_back(r);
    bound = {std::min(bound.x0, r.x0), std::max(bound.x1, r.x1), std::min(bound.y0, r.y0), std::max(bound.y1, r.y1)};
  }
  StatsAccum acc;
  for (int y = bound.y0; y < bound.y1; ++y) {
    for (int x = bound.x0; x < bound.x1; ++x) {
      const bool inside = std::any_of(ranges.begin(), ranges.end(), [&](const PixelRange& r) {
        return x >= r.x0 && x < r.x1 && y >= r.y0 && y < r.y1;
      });
      if (!inside) continue;
      const std::size_t i = static_cast<std::size_t>(y) * flow.width + x;
      acc.add(flow.fx[i], flow.fy[i]);
    }
  }
  return acc.finish();
}

namespace {

float median_of(std::vector<float>& v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const float upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const float lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5f * (lower + upper);
}

}  // namespace

FlowField compensate_ego_motion(const FlowField& flow, std::span<const BBox> person_boxes) {
  PixelMask people = box_union_mask(person_boxes, flow.width, flow.height, 0);
  std::vector<float> bx, by;
  bx.reserve(people.on.size());
  by.reserve(people.on.size());
  for (std::size_t i = 0; i < people.on.size(); ++i) {
    if (people.on[i]) continue;
    bx.push_back(flow.fx[i]);
    by.push_back(flow.fy[i]);
  }
  if (bx.empty() || bx.size() * 100 < people.on.size()) return flow;
  const float mx = median_of(bx);
  const float my = median_of(by);
  FlowField out = flow;
  for (auto& v : out.fx) v -= mx;
  for (auto& v : out.fy) v -= my;
  return out;
}

FlowField mirror_flow(const FlowField& flow) {
  FlowField out(flow.width, flow.height);
  for (int y = 0; y < flow.height; ++y) {
    for (int x = 0; x < flow.width; ++x) {
      const std::size_t src = flow.index(flow.width - 1 - x, y);
      const std::size_t dst = out.index(x, y);
      out.fx[dst] = -flow.fx[src];
      out.fy[dst] = flow.fy[src];
    }
  }
  return out;
}

std::string encode_flow(const FlowField& flow) {
  std::string buf = "FLOW1";
  buf.reserve(13 + 8 * flow.fx.size());
  binio::put(buf, static_cast<std::uint32_t>(flow.width));
  binio::put(buf, static_cast<std::uint32_t>(flow.height));
  for (float v : flow.fx) binio::put_f32(buf, v);
  for (float v : flow.fy) binio::put_f32(buf, v);
  return buf;
}

FlowField decode_flow(std::span<const char> bytes) {
  binio::Reader rd(bytes, "flow container");
  if (rd.get_string(5) != "FLOW1") throw Error(ErrorCode::CorruptFile, "bad flow magic");
  const auto w = rd.get<std::uint32_t>();
  const auto h = rd.get<std::uint32_t>();
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (rd.remaining() != 8 * n) throw Error(ErrorCode::CorruptFile, "flow payload has the wrong size");
  FlowField f(static_cast<int>(w), static_cast<int>(h));
  for (auto& v : f.fx) v = rd.get_f32();
  for (auto& v : f.fy) v = rd.get_f32();
  return f;
}

void write_flow(const std::filesystem::path& path, const FlowField& flow) {
  binio::write_file_atomic(path, encode_flow(flow));
}

FlowField read_flow(const std::filesystem::path& path) { return decode_flow(binio::read_file(path)); }

RgbImage flow_to_color(const FlowField& flow, double max_mag) {
  if (max_mag <= 0.0) {
    for (std::size_t i = 0; i < flow.fx.size(); ++i) {
      max_mag = std::max(max_mag, std::hypot(static_cast<double>(flow.fx[i]), static_cast<double>(flow.fy[i])));
    }
    if (max_mag <= 0.0) max_mag = 1.0;
  }
  RgbImage out(flow.width, flow.height);
  for (int y = 0; y < flow.height; ++y) {
    for (int x = 0; x < flow.width; ++x) {
      const std::size_t i = flow.index(x, y);
      const double mag = std::hypot(static_cast<double>(flow.fx[i]), static_cast<double>(flow.fy[i]));
      double hue = std::atan2(-static_cast<double>(flow.fy[i]), -static_cast<double>(flow.fx[i])) / std::numbers::pi;
      hue = (hue + 1.0) * 3.0;  // [0, 6)
      const double sat = std::min(1.0, mag / max_mag);
      const int sector = static_cast<int>(hue) % 6;
      const double f = hue - std::floor(hue);
      const double p = 1.0 - sat, q = 1.0 - sat * f, t = 1.0 - sat * (1.0 - f);
      double r = 1, g = 1, b = 1;
      switch (sector) {
        case 0: r = 1; g = t; b = p; break;
        case 1: r = q; g = 1; b = p; break;
        case 2: r = p; g = 1; b = t; break;
        case 3: r = p; g = q; b = 1; break;
        case 4: r = t; g = p; b = 1; break;
        default: r = 1; g = p; b = q; break;
      }
      out.set(x, y, {static_cast<std::uint8_t>(std::lround(255 * r)), static_cast<std::uint8_t>(std::lround(255 * g)),
                     static_cast<std::uint8_t>(std::lround(255 * b))});
    }
  }
  return out;
}

std::uint64_t estimate_flow_flops(int width, int height, const FarnebackParams& params) {
  std::uint64_t total = 0;
  const std::uint64_t r = static_cast<std::uint64_t>(params.poly_n / 2);
  const std::uint64_t wr = static_cast<std::uint64_t>(params.window / 2);
  for (const auto& s : pyramid_sizes(width, height, params)) {
    const std::uint64_t px = static_cast<std::uint64_t>(s.width) * s.height;
    // two expansions: vertical (3 moments), horizontal (6 moments), 6x6 solve
    const std::uint64_t expansion = px * (r * 12 + r * 18 + 72);
    // per iteration: matrix update, 5-plane separable blur, 2x2 solve
    const std::uint64_t iteration = px * (30 + 5 * 2 * (3 * wr + 1) + 12);
    total += 2 * expansion + static_cast<std::uint64_t>(params.iterations) * iteration;
  }
  return total;
}

}  // namespace pairint
