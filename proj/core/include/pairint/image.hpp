#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace pairint {

/// Single-channel image with intensities in [0, 1], stored row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  GrayImage() = default;
  GrayImage(int w, int h, float fill = 0.0f);

  bool empty() const noexcept { return data.empty(); }
  float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
};

using Rgb = std::array<std::uint8_t, 3>;

/// 8-bit interleaved RGB raster used for visualizations.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  RgbImage() = default;
  RgbImage(int w, int h, Rgb fill = {0, 0, 0});

  void set(int x, int y, Rgb c);
  Rgb get(int x, int y) const;
  bool contains(int x, int y) const noexcept { return x >= 0 && y >= 0 && x < width && y < height; }
};

/// Reads an 8-bit (or 16-bit PGM) grayscale or RGB image; color inputs are
/// converted with Rec.601 luma weights. Supports PNG and binary PGM (P5).
GrayImage read_gray_image(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const GrayImage& img);
void write_png(const std::filesystem::path& path, const RgbImage& img);
void write_pgm(const std::filesystem::path& path, const GrayImage& img);

RgbImage to_rgb(const GrayImage& img);

}  // namespace pairint
