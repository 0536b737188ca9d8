#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pairint/data.hpp"
#include "pairint/image.hpp"

namespace pairint {

/// Rows are ground truth, columns are predictions.
struct ConfusionMatrix {
  int classes = 0;
  std::vector<std::int64_t> counts;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int n) : classes(n), counts(static_cast<std::size_t>(n) * n, 0) {}

  std::int64_t& at(int truth, int pred) { return counts[static_cast<std::size_t>(truth) * classes + pred]; }
  std::int64_t at(int truth, int pred) const { return counts[static_cast<std::size_t>(truth) * classes + pred]; }
  std::int64_t total() const noexcept;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;
};

struct MetricReport {
  double accuracy = 0.0;
  double mpca = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassMetrics> per_class;
  /// Classes without ground-truth samples; left out of the MPCA and Macro-F1 means.
  std::vector<int> excluded_classes;
  ConfusionMatrix confusion;
  std::vector<std::string> class_names;
};

/// Class indices in [0, num_classes). Throws LengthMismatch, Empty, InvalidTarget.
MetricReport compute_metrics(std::span<const int> preds, std::span<const int> labels, int num_classes);

std::string metrics_json(const MetricReport& r);
/// Aligned plain-text table: per-class rows followed by the summary lines.
std::string metrics_table(const MetricReport& r);
/// Row-normalized heatmap, one cell block per matrix entry.
RgbImage confusion_heatmap(const ConfusionMatrix& cm, int cell = 48);

/// An unordered pair in one frame of one scene; a < b.
struct PairKey {
  int scene = 0;
  int frame_id = 0;
  int a = 0;
  int b = 0;

  static PairKey make(int scene, int frame_id, int x, int y) {
    return {scene, frame_id, std::min(x, y), std::max(x, y)};
  }
  friend auto operator<=>(const PairKey&, const PairKey&) = default;
};

struct DetectionReport {
  double precision = 1.0;
  double recall = 1.0;
  std::int64_t true_positives = 0;
  std::int64_t predicted = 0;
  std::int64_t annotated = 0;
  /// Set when a denominator was zero and the value defaulted to 1.
  bool degenerate_precision = false;
  bool degenerate_recall = false;
};

DetectionReport detection_pr(std::span<const PairKey> predicted, std::span<const PairKey> truth);
std::string detection_json(const DetectionReport& r);

struct LabeledPair {
  int a = 0;
  int b = 0;
  InteractionClass label = InteractionClass::WalkingTogether;
};

/// Most frequent class; ties go to the earlier class (walk < stand < sit).
/// Empty input gives no activity.
std::optional<InteractionClass> majority_vote(std::span<const InteractionClass> labels);

struct GroupingReport {
  double membership_accuracy = 0.0;
  double social_activity_accuracy = 0.0;
  std::int64_t persons = 0;
  std::int64_t membership_hits = 0;
  std::int64_t activity_hits = 0;

  /// Pools counts from another frame.
  void merge(const GroupingReport& other);
};

/// Groups are partitions of the same person set (else PartitionMismatch).
/// A person's membership is correct when its co-member set matches exactly.
/// Group activity is the majority vote over the pair labels inside the group;
/// singletons and groups without labeled pairs carry no activity, and "no
/// activity" matches "no activity".
GroupingReport grouping_scores(std::span<const std::vector<int>> pred_groups, std::span<const LabeledPair> pred_labels,
                               std::span<const std::vector<int>> gt_groups, std::span<const LabeledPair> gt_labels);

std::string grouping_json(const GroupingReport& r);

/// Ground-truth partition of a frame: components of its interacting pairs.
std::vector<std::vector<int>> ground_truth_groups(const SceneSequence& seq, const Frame& frame);
std::vector<LabeledPair> ground_truth_pairs(const SceneSequence& seq, const Frame& frame);

}  // namespace pairint
