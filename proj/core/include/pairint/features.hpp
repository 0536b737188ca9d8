#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pairint/data.hpp"
#include "pairint/flow.hpp"

namespace pairint {

inline constexpr std::size_t kStage1Dims = 7;
inline constexpr std::size_t kStage2Dims = 10;

/// Floor for the |F_x| denominator of the vertical/horizontal motion ratio.
inline constexpr double kRatioEpsilon = 1e-6;
/// Upper clamp of the vertical/horizontal motion ratio.
inline constexpr double kRatioMax = 50.0;

struct FrameDims {
  int width = 0;
  int height = 0;
};

/// g1 = d/mean h, g2 = d/mean w, g3 = IoU, g4 = |dh|/max h, g5 = |dw|/max w,
/// g6 = |d cy|/mean h, g7 = |d bottom|/mean h. d is the center distance.
struct Stage1Features {
  std::array<double, kStage1Dims> g{};
};

struct Stage2Features {
  std::array<double, kStage2Dims> f{};
};

struct PerPersonMotion {
  double mu_mag = 0.0;
  double sigma_mag = 0.0;
  double vh_ratio = 0.0;
  double mean_angle = 0.0;
  double aspect = 1.0;
};

/// Pixels excluded around the image border when building flow masks.
struct MaskPolicy {
  int ring = FarnebackParams{}.border_ring();
};

Stage1Features stage1_geometry(const BBox& a, const BBox& b, FrameDims dims);

/// f1..f5.
std::array<double, 5> stage2_geometry(const BBox& a, const BBox& b, FrameDims dims);

/// f6..f9 over the union of both boxes.
std::array<double, 4> stage2_motion(const BBox& a, const BBox& b, const FlowField& flow, MaskPolicy policy = {});

PerPersonMotion per_person_motion(const BBox& box, const FlowField& flow, MaskPolicy policy = {});

/// f10: mean of four bounded similarities in [0, 1].
double synchrony(const PerPersonMotion& a, const PerPersonMotion& b);

/// Full 10D descriptor, computed in both person orders and symmetrized.
Stage2Features stage2_features(const BBox& a, const BBox& b, const FlowField& flow, MaskPolicy policy = {});
/// Same, reusing per-person statistics computed once per frame.
Stage2Features stage2_features(const BBox& a, const BBox& b, const FlowField& flow, const PerPersonMotion& pa,
                               const PerPersonMotion& pb, MaskPolicy policy = {});

/// Geometry-only variant (f6..f10 left at zero); used when no flow is available.
Stage2Features stage2_geometry_features(const BBox& a, const BBox& b, FrameDims dims);

std::vector<double> symmetrize(std::span<const double> ab, std::span<const double> ba);

BBox flip_box(const BBox& box, int image_width) noexcept;
std::vector<BBox> horizontal_flip(std::span<const BBox> boxes, int image_width);
/// Mirrors the boxes and, when present, the flow field.
std::pair<std::vector<BBox>, std::optional<FlowField>> horizontal_flip(std::span<const BBox> boxes,
                                                                       const FlowField* flow, int image_width);

/// Per-dimension training statistics; std is the population deviation.
struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> std;

  std::size_t dims() const noexcept { return mean.size(); }
};

/// Dimensions whose std falls below this are centered but not scaled.
inline constexpr double kMinFeatureStd = 1e-8;

FeatureStats compute_feature_stats(std::span<const std::vector<double>> rows);
std::vector<double> standardize(std::span<const double> f, const FeatureStats& stats);
void standardize_in_place(std::span<double> f, const FeatureStats& stats);

/// True when every component is finite.
bool all_finite(std::span<const double> v) noexcept;

struct FeatureRow {
  int frame_id = 0;
  int a = 0;
  int b = 0;
  std::vector<double> values;
  std::optional<InteractionClass> label;
};

/// Header `frame_id,a,b,<prefix>1..<prefix>N,label`; empty label for negatives.
void write_feature_csv(std::ostream& out, std::span<const FeatureRow> rows, const std::string& prefix);

}  // namespace pairint
