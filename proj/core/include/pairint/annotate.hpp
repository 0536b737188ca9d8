#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>

#include "pairint/data.hpp"
#include "pairint/image.hpp"

namespace pairint {

struct DrawnEdge {
  int a = 0;
  int b = 0;
  std::optional<InteractionClass> label;
};

Rgb class_color(std::optional<InteractionClass> c) noexcept;

/// Boxes, a line between the centers of every edge, and the class name at the
/// line's midpoint. Persons without an edge use the neutral color.
RgbImage annotate_frame(const GrayImage& img, const Frame& frame, std::span<const DrawnEdge> edges);

/// Upper-case 5x7 bitmap text; unsupported characters advance as blanks.
void draw_text(RgbImage& img, int x, int y, std::string_view text, Rgb color, int scale = 1);
void draw_line(RgbImage& img, int x0, int y0, int x1, int y1, Rgb color);
void draw_rect(RgbImage& img, const BBox& box, Rgb color, int thickness = 2);

/// Renders every frame listed in <inference_dir>/proposals.jsonl to
/// <out_dir>/<scene>/NNNNNN.png using the labels in classifications.jsonl.
/// Returns the number of images written.
std::size_t annotate_dataset(const Dataset& data, const std::filesystem::path& inference_dir,
                             const std::filesystem::path& out_dir);

}  // namespace pairint
