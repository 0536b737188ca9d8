#pragma once

#include <array>
#include <span>
#include <utility>
#include <vector>

#include "pairint/data.hpp"
#include "pairint/flow.hpp"
#include "pairint/image.hpp"

// Slow reference implementations used to cross-check the main code paths.
namespace pairint::oracle {

inline constexpr int kBlockSize = 8;

/// Exhaustive 8x8 block matching over integer displacements within +-radius.
/// Ties go to the smaller displacement, then to the lexicographically smaller
/// (dx, dy). Every pixel of a block carries the block's displacement.
FlowField brute_force_flow(const GrayImage& prev, const GrayImage& next, int radius);

/// Direct per-pixel evaluation of the ten pair descriptors. `ring` border
/// pixels are excluded from every flow mask.
std::array<double, 10> oracle_features(const BBox& a, const BBox& b, const FlowField& flow, int image_width,
                                       int image_height, int ring = 2);

/// Connected components by breadth-first search; members ascending, groups
/// ordered by smallest member.
std::vector<std::vector<int>> oracle_components(std::span<const std::pair<int, int>> edges, std::span<const int> nodes);

}  // namespace pairint::oracle
