#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pairint/image.hpp"

namespace pairint {

/// Axis-aligned person box in pixels; (x, y) is the top-left corner.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double cx() const noexcept { return x + 0.5 * w; }
  double cy() const noexcept { return y + 0.5 * h; }
  double right() const noexcept { return x + w; }
  double bottom() const noexcept { return y + h; }
  double area() const noexcept { return w * h; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

double iou(const BBox& a, const BBox& b) noexcept;

struct PersonObs {
  int track_id = 0;
  BBox bbox;
  /// Unset when the annotation carries no occlusion information.
  std::optional<bool> occluded;
  int frame_id = 0;

  friend bool operator==(const PersonObs&, const PersonObs&) = default;
};

struct Frame {
  int frame_id = 0;
  /// Image path relative to the owning sequence's base directory.
  std::string image;
  int width = 0;
  int height = 0;
  std::vector<PersonObs> persons;
  /// Optional in-memory pixels; takes precedence over `image`.
  std::shared_ptr<const GrayImage> pixels;
  /// Optional on-demand renderer (synthetic scenes); used when `pixels` is empty.
  std::function<GrayImage()> render;

  const PersonObs* find(int track_id) const noexcept;
};

enum class InteractionClass { WalkingTogether = 0, StandingTogether = 1, SittingTogether = 2 };

inline constexpr int kNumInteractionClasses = 3;

std::string_view label_name(InteractionClass c) noexcept;
std::optional<InteractionClass> parse_label(std::string_view name) noexcept;

/// Annotated relation for one unordered pair, stored with a < b.
/// An empty label marks an explicitly annotated non-interacting pair.
struct PairLabel {
  int a = 0;
  int b = 0;
  std::optional<InteractionClass> label;

  friend bool operator==(const PairLabel&, const PairLabel&) = default;
};

struct SceneSequence {
  std::string name;
  std::filesystem::path base_dir;
  double fps = 15.0;
  std::vector<Frame> frames;
  std::map<int, std::vector<PairLabel>> labels;

  /// Label for the unordered pair (a, b) in `frame_id`; empty when the pair is
  /// not interacting (explicitly or by omission).
  std::optional<InteractionClass> label_of(int frame_id, int a, int b) const;
};

/// A dataset is a list of scenes; splits and evaluation work at scene level.
using Dataset = std::vector<SceneSequence>;

struct FilterConfig {
  double border_margin = 5.0;
  bool drop_occluded = true;
  /// IoU above which a box overlapped by a nearer box counts as occluded
  /// when the annotation carries no occlusion flag.
  double occlusion_iou = 0.7;
};

inline constexpr int kDefaultSampleInterval = 5;

/// Parses and validates a JSONL annotation file (one frame per line).
SceneSequence load_annotations(const std::filesystem::path& path);
SceneSequence parse_annotations(std::string_view text, const std::string& source = "<memory>");
void save_annotations(const SceneSequence& seq, const std::filesystem::path& path);
std::string format_annotations(const SceneSequence& seq);

/// Loads one .jsonl file, or every .jsonl file below a directory (sorted by path).
Dataset load_dataset(const std::filesystem::path& path);

Frame filter_observations(const Frame& frame, double border_margin, bool drop_occluded,
                          double occlusion_iou = 0.7);
/// Filters every frame and drops labels that reference removed persons.
SceneSequence filter_sequence(const SceneSequence& seq, const FilterConfig& cfg);

SceneSequence sample_frames(const SceneSequence& seq, int interval);
/// Indices kept by `sample_frames` for a sequence of `frame_count` frames.
std::vector<std::size_t> sampled_indices(std::size_t frame_count, int interval);

using PersonPair = std::pair<PersonObs, PersonObs>;
std::vector<PersonPair> enumerate_pairs(const Frame& frame);

/// Pixels for a frame: in-memory if present, otherwise loaded from disk.
GrayImage load_frame_image(const SceneSequence& seq, const Frame& frame);

}  // namespace pairint
