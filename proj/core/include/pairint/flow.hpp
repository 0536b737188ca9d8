#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pairint/data.hpp"
#include "pairint/image.hpp"

namespace pairint {

/// Dense displacement field; fx positive rightward, fy positive downward,
/// in pixels per frame.
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<float> fx;
  std::vector<float> fy;

  FlowField() = default;
  FlowField(int w, int h, float ux = 0.0f, float uy = 0.0f);

  std::size_t index(int x, int y) const noexcept { return static_cast<std::size_t>(y) * width + x; }
};

struct FarnebackParams {
  double pyramid_scale = 0.5;
  int levels = 3;
  int window = 15;
  int iterations = 3;
  int poly_n = 5;
  double poly_sigma = 1.1;

  /// Throws InvalidParams when any field is out of range.
  void validate() const;
  /// Width of the outer pixel ring whose flow is treated as low-confidence.
  int border_ring() const noexcept { return poly_n / 2; }
};

/// Per-pixel quadratic model f(p + u) ~ u'Au + b'u + c, planar storage.
struct PolyCoeffs {
  int width = 0;
  int height = 0;
  std::vector<float> a11, a12, a22, b1, b2, c;
};

PolyCoeffs polynomial_expansion(const GrayImage& img, int poly_n, double poly_sigma);

/// Polynomial expansions of one frame at every pyramid level, finest first.
/// Building this once per frame lets a video pipeline reuse it for both
/// flow computations the frame takes part in.
struct FlowPyramid {
  int width = 0;
  int height = 0;
  std::vector<PolyCoeffs> levels;
};

FlowPyramid build_flow_pyramid(const GrayImage& img, const FarnebackParams& params);
FlowField estimate_flow(const FlowPyramid& prev, const FlowPyramid& next, const FarnebackParams& params);
FlowField estimate_flow(const GrayImage& prev, const GrayImage& next, const FarnebackParams& params = {});

/// Half-open pixel index ranges covered by a box: a pixel belongs to the box
/// when its center lies inside [x, x + w) x [y, y + h).
struct PixelRange {
  int x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  bool empty() const noexcept { return x0 >= x1 || y0 >= y1; }
};
PixelRange box_pixels(const BBox& box, int width, int height) noexcept;

struct PixelMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> on;

  PixelMask() = default;
  PixelMask(int w, int h) : width(w), height(h), on(static_cast<std::size_t>(w) * h, 0) {}
  std::size_t count() const noexcept;
};

/// Union of the boxes' pixels, excluding the outer `ring` pixels of the image.
PixelMask box_union_mask(std::span<const BBox> boxes, int width, int height, int ring);

struct FlowStats {
  double mu_mag = 0.0;
  double sigma_mag = 0.0;
  double mean_abs_fx = 0.0;
  double mean_abs_fy = 0.0;
  double coh_c = 0.0;
  double coh_s = 0.0;

  double coherence() const;
};

/// Magnitudes below this are treated as zero; such pixels get direction 0.
inline constexpr double kZeroFlowMagnitude = 1e-6;

FlowStats flow_stats(const FlowField& flow, const PixelMask& mask);
/// Equivalent to flow_stats over box_union_mask(boxes, ..., ring).
FlowStats flow_stats(const FlowField& flow, std::span<const BBox> boxes, int ring);

/// Subtracts the per-channel median of the background (outside every box).
/// Returns the input unchanged when less than 1% of pixels are background.
FlowField compensate_ego_motion(const FlowField& flow, std::span<const BBox> person_boxes);

FlowField mirror_flow(const FlowField& flow);

void write_flow(const std::filesystem::path& path, const FlowField& flow);
FlowField read_flow(const std::filesystem::path& path);
std::string encode_flow(const FlowField& flow);
FlowField decode_flow(std::span<const char> bytes);

/// Color-wheel rendering (hue = direction, saturation = magnitude / max_mag).
/// A non-positive max_mag normalizes by the field's largest magnitude.
RgbImage flow_to_color(const FlowField& flow, double max_mag = 0.0);

/// Approximate floating point operations of one estimate_flow call.
std::uint64_t estimate_flow_flops(int width, int height, const FarnebackParams& params);

}  // namespace pairint
