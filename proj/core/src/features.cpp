#include "pairint/features.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "pairint/error.hpp"

namespace pairint {

namespace {

void check_box(const BBox& b) {
  if (!(b.w > 0.0) || !(b.h > 0.0) || !std::isfinite(b.x) || !std::isfinite(b.y)) {
    throw Error(ErrorCode::DegenerateBox, "box has non-positive size");
  }
}

double center_distance(const BBox& a, const BBox& b) { return std::hypot(a.cx() - b.cx(), a.cy() - b.cy()); }

double ratio(double v, double h) { return std::min(v / std::max(h, kRatioEpsilon), kRatioMax); }

double similarity(double p, double q) { return 1.0 - std::abs(p - q) / (p + q + kRatioEpsilon); }

std::array<double, 4> motion_terms(const BBox& a, const BBox& b, const FlowField& flow, MaskPolicy policy) {
  const std::array<BBox, 2> boxes{a, b};
  const FlowStats s = flow_stats(flow, boxes, policy.ring);
  const double mean_area = 0.5 * (a.area() + b.area());
  return {s.mu_mag / mean_area, s.sigma_mag / mean_area, ratio(s.mean_abs_fy, s.mean_abs_fx),
          std::min(s.coherence(), 1.0 + 1e-9)};
}

// The union mask does not depend on person order, so the motion terms are
// shared by both orders.
Stage2Features ordered_features(const BBox& a, const BBox& b, FrameDims dims, const std::array<double, 4>& mot,
                                const PerPersonMotion& pa, const PerPersonMotion& pb) {
  Stage2Features out;
  const auto geo = stage2_geometry(a, b, dims);
  std::copy(geo.begin(), geo.end(), out.f.begin());
  std::copy(mot.begin(), mot.end(), out.f.begin() + 5);
  out.f[9] = synchrony(pa, pb);
  return out;
}

}  // namespace

Stage1Features stage1_geometry(const BBox& a, const BBox& b, FrameDims dims) {
  check_box(a);
  check_box(b);
  (void)dims;
  const double mh = 0.5 * (a.h + b.h);
  const double mw = 0.5 * (a.w + b.w);
  const double d = center_distance(a, b);
  Stage1Features out;
  out.g = {d / mh,
           d / mw,
           std::clamp(iou(a, b), 0.0, 1.0),
           std::abs(a.h - b.h) / std::max(a.h, b.h),
           std::abs(a.w - b.w) / std::max(a.w, b.w),
           std::abs(a.cy() - b.cy()) / mh,
           std::abs(a.bottom() - b.bottom()) / mh};
  return out;
}

std::array<double, 5> stage2_geometry(const BBox& a, const BBox& b, FrameDims dims) {
  check_box(a);
  check_box(b);
  if (dims.height <= 0) throw Error(ErrorCode::InvalidParams, "image height must be positive");
  const double mh = 0.5 * (a.h + b.h);
  const double mw = 0.5 * (a.w + b.w);
  const double d = center_distance(a, b);
  const double img_h = dims.height;
  return {d / mh, d / mw, 0.5 * (a.h / a.w + b.h / b.w), mh / img_h, 0.5 * (a.bottom() + b.bottom()) / img_h};
}

std::array<double, 4> stage2_motion(const BBox& a, const BBox& b, const FlowField& flow, MaskPolicy policy) {
  check_box(a);
  check_box(b);
  return motion_terms(a, b, flow, policy);
}

PerPersonMotion per_person_motion(const BBox& box, const FlowField& flow, MaskPolicy policy) {
  check_box(box);
  const std::array<BBox, 1> boxes{box};
  const FlowStats s = flow_stats(flow, boxes, policy.ring);
  return {s.mu_mag, s.sigma_mag, ratio(s.mean_abs_fy, s.mean_abs_fx), std::atan2(s.coh_s, s.coh_c), box.h / box.w};
}

double synchrony(const PerPersonMotion& a, const PerPersonMotion& b) {
  const double sim_dir = 0.5 * (1.0 + std::cos(a.mean_angle - b.mean_angle));
  const double v = (similarity(a.mu_mag, b.mu_mag) + similarity(a.sigma_mag, b.sigma_mag) +
                    similarity(a.aspect, b.aspect) + sim_dir) /
                   4.0;
  return std::clamp(v, 0.0, 1.0);
}

Stage2Features stage2_features(const BBox& a, const BBox& b, const FlowField& flow, MaskPolicy policy) {
  check_box(a);
  check_box(b);
  return stage2_features(a, b, flow, per_person_motion(a, flow, policy), per_person_motion(b, flow, policy), policy);
}

Stage2Features stage2_features(const BBox& a, const BBox& b, const FlowField& flow, const PerPersonMotion& pa,
                               const PerPersonMotion& pb, MaskPolicy policy) {
  check_box(a);
  check_box(b);
  const auto mot = motion_terms(a, b, flow, policy);
  const FrameDims dims{flow.width, flow.height};
  const Stage2Features ab = ordered_features(a, b, dims, mot, pa, pb);
  const Stage2Features ba = ordered_features(b, a, dims, mot, pb, pa);
  Stage2Features out;
  for (std::size_t i = 0; i < kStage2Dims; ++i) out.f[i] = 0.5 * (ab.f[i] + ba.f[i]);
  return out;
}

Stage2Features stage2_geometry_features(const BBox& a, const BBox& b, FrameDims dims) {
  Stage2Features out;
  const auto ab = stage2_geometry(a, b, dims);
  const auto ba = stage2_geometry(b, a, dims);
  for (std::size_t i = 0; i < ab.size(); ++i) out.f[i] = 0.5 * (ab[i] + ba[i]);
  return out;
}

std::vector<double> symmetrize(std::span<const double> ab, std::span<const double> ba) {
  if (ab.size() != ba.size()) throw Error(ErrorCode::LengthMismatch, "feature vectors differ in length");
  std::vector<double> out(ab.size());
  for (std::size_t i = 0; i < ab.size(); ++i) out[i] = 0.5 * (ab[i] + ba[i]);
  return out;
}

BBox flip_box(const BBox& box, int image_width) noexcept {
  BBox out = box;
  out.x = image_width - box.x - box.w;
  return out;
}

std::vector<BBox> horizontal_flip(std::span<const BBox> boxes, int image_width) {
  std::vector<BBox> out;
  out.reserve(boxes.size());
  for (const auto& b : boxes) out.push_back(flip_box(b, image_width));
  return out;
}

std::pair<std::vector<BBox>, std::optional<FlowField>> horizontal_flip(std::span<const BBox> boxes,
                                                                       const FlowField* flow, int image_width) {
  std::optional<FlowField> mirrored;
  if (flow) mirrored = mirror_flow(*flow);
  return {horizontal_flip(boxes, image_width), std::move(mirrored)};
}

FeatureStats compute_feature_stats(std::span<const std::vector<double>> rows) {
  if (rows.empty()) throw Error(ErrorCode::EmptyDataset, "no feature rows to compute statistics from");
  const std::size_t d = rows.front().size();
  FeatureStats s;
  s.mean.assign(d, 0.0);
  s.std.assign(d, 0.0);
  for (const auto& r : rows) {
    if (r.size() != d) throw Error(ErrorCode::StatsDimensionMismatch, "feature rows differ in length");
    for (std::size_t i = 0; i < d; ++i) s.mean[i] += r[i];
  }
  for (auto& m : s.mean) m /= static_cast<double>(rows.size());
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < d; ++i) s.std[i] += (r[i] - s.mean[i]) * (r[i] - s.mean[i]);
  }
  for (auto& v : s.std) v = std::sqrt(v / static_cast<double>(rows.size()));
  return s;
}

void standardize_in_place(std::span<double> f, const FeatureStats& stats) {
  if (f.size() != stats.mean.size() || stats.std.size() != stats.mean.size()) {
    throw Error(ErrorCode::StatsDimensionMismatch, "feature has " + std::to_string(f.size()) +
                                                       " dims, statistics have " + std::to_string(stats.mean.size()));
  }
  for (std::size_t i = 0; i < f.size(); ++i) {
    f[i] -= stats.mean[i];
    if (stats.std[i] >= kMinFeatureStd) f[i] /= stats.std[i];
  }
}

std::vector<double> standardize(std::span<const double> f, const FeatureStats& stats) {
  std::vector<double> out(f.begin(), f.end());
  standardize_in_place(out, stats);
  return out;
}

bool all_finite(std::span<const double> v) noexcept {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void write_feature_csv(std::ostream& out, std::span<const FeatureRow> rows, const std::string& prefix) {
  const std::size_t d = rows.empty() ? 0 : rows.front().values.size();
  out << "frame_id,a,b";
  for (std::size_t i = 1; i <= d; ++i) out << ',' << prefix << i;
  out << ",label\n";
  const auto old_precision = out.precision(10);
  for (const auto& r : rows) {
    if (r.values.size() != d) throw Error(ErrorCode::LengthMismatch, "feature rows differ in length");
    out << r.frame_id << ',' << r.a << ',' << r.b;
    for (double v : r.values) out << ',' << v;
    out << ',';
    if (r.label) out << label_name(*r.label);
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace pairint
