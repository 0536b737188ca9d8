#include "pairint/evaluator.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>

#include "pairint/error.hpp"
#include "pairint/stage1.hpp"

namespace pairint {

using nlohmann::json;

std::int64_t ConfusionMatrix::total() const noexcept {
  return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

MetricReport compute_metrics(std::span<const int> preds, std::span<const int> labels, int num_classes) {
  if (preds.size() != labels.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(preds.size()) + " predictions for " +
                                               std::to_string(labels.size()) + " labels");
  }
  if (preds.empty()) throw Error(ErrorCode::Empty, "no samples to evaluate");
  if (num_classes < 1) throw Error(ErrorCode::InvalidParams, "need at least one class");
  MetricReport r;
  r.confusion = ConfusionMatrix(num_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= num_classes || labels[i] < 0 || labels[i] >= num_classes) {
      throw Error(ErrorCode::InvalidTarget, "class index out of range at sample " + std::to_string(i));
    }
    ++r.confusion.at(labels[i], preds[i]);
  }
  std::int64_t correct = 0;
  double sum_recall = 0, sum_f1 = 0;
  int used = 0;
  for (int c = 0; c < num_classes; ++c) {
    std::int64_t tp = r.confusion.at(c, c), support = 0, predicted = 0;
    for (int k = 0; k < num_classes; ++k) {
      support += r.confusion.at(c, k);
      predicted += r.confusion.at(k, c);
    }
    correct += tp;
    ClassMetrics m;
    m.support = support;
    m.precision = predicted > 0 ? static_cast<double>(tp) / predicted : 0.0;
    m.recall = support > 0 ? static_cast<double>(tp) / support : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    r.per_class.push_back(m);
    if (support == 0) {
      r.excluded_classes.push_back(c);
      continue;
    }
    sum_recall += m.recall;
    sum_f1 += m.f1;
    ++used;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(preds.size());
  r.mpca = sum_recall / used;
  r.macro_f1 = sum_f1 / used;
  for (int c = 0; c < num_classes; ++c) {
    r.class_names.push_back(num_classes == kNumInteractionClasses
                                ? std::string(label_name(static_cast<InteractionClass>(c)))
                                : "class_" + std::to_string(c));
  }
  return r;
}

std::string metrics_json(const MetricReport& r) {
  json j;
  j["accuracy"] = r.accuracy;
  j["mpca"] = r.mpca;
  j["macro_f1"] = r.macro_f1;
  j["excluded_classes"] = r.excluded_classes;
  json pc = json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& m = r.per_class[c];
    pc.push_back({{"class", c < r.class_names.size() ? r.class_names[c] : std::to_string(c)},
                  {"precision", m.precision},
                  {"recall", m.recall},
                  {"f1", m.f1},
                  {"support", m.support}});
  }
  j["per_class"] = pc;
  json cm = json::array();
  for (int t = 0; t < r.confusion.classes; ++t) {
    json row = json::array();
    for (int p = 0; p < r.confusion.classes; ++p) row.push_back(r.confusion.at(t, p));
    cm.push_back(row);
  }
  j["confusion"] = cm;
  return j.dump(2);
}

std::string metrics_table(const MetricReport& r) {
  std::string out;
  char line[160];
  std::size_t wname = 5;
  for (const auto& n : r.class_names) wname = std::max(wname, n.size());
  std::snprintf(line, sizeof line, "%-*s %9s %9s %9s %9s\n", static_cast<int>(wname), "class", "precision", "recall",
                "f1", "support");
  out += line;
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& m = r.per_class[c];
    std::snprintf(line, sizeof line, "%-*s %9.4f %9.4f %9.4f %9lld\n", static_cast<int>(wname),
                  r.class_names[c].c_str(), m.precision, m.recall, m.f1, static_cast<long long>(m.support));
    out += line;
  }
  std::snprintf(line, sizeof line, "\naccuracy  %.4f\nmpca      %.4f\nmacro_f1  %.4f\n", r.accuracy, r.mpca,
                r.macro_f1);
  out += line;
  if (!r.excluded_classes.empty()) {
    out += "excluded (no support):";
    for (int c : r.excluded_classes) out += " " + r.class_names[c];
    out += "\n";
  }
  return out;
}

RgbImage confusion_heatmap(const ConfusionMatrix& cm, int cell) {
  const int n = cm.classes;
  RgbImage img(std::max(1, n * cell), std::max(1, n * cell), {255, 255, 255});
  for (int t = 0; t < n; ++t) {
    std::int64_t row = 0;
    for (int p = 0; p < n; ++p) row += cm.at(t, p);
    for (int p = 0; p < n; ++p) {
      const double v = row > 0 ? static_cast<double>(cm.at(t, p)) / row : 0.0;
      // white to dark blue
      const Rgb c{static_cast<std::uint8_t>(255 - 225 * v), static_cast<std::uint8_t>(255 - 185 * v),
                  static_cast<std::uint8_t>(255 - 75 * v)};
      for (int y = t * cell; y < (t + 1) * cell; ++y) {
        for (int x = p * cell; x < (p + 1) * cell; ++x) {
          const bool edge = y == t * cell || x == p * cell;
          img.set(x, y, edge ? Rgb{128, 128, 128} : c);
        }
      }
    }
  }
  return img;
}

DetectionReport detection_pr(std::span<const PairKey> predicted, std::span<const PairKey> truth) {
  auto norm = [](std::span<const PairKey> in) {
    std::set<PairKey> s;
    for (const auto& k : in) s.insert(PairKey::make(k.scene, k.frame_id, k.a, k.b));
    return s;
  };
  const auto pred = norm(predicted);
  const auto gt = norm(truth);
  DetectionReport r;
  r.predicted = static_cast<std::int64_t>(pred.size());
  r.annotated = static_cast<std::int64_t>(gt.size());
  for (const auto& k : pred) r.true_positives += gt.count(k);
  r.degenerate_precision = r.predicted == 0;
  r.degenerate_recall = r.annotated == 0;
  r.precision = r.predicted ? static_cast<double>(r.true_positives) / r.predicted : 1.0;
  r.recall = r.annotated ? static_cast<double>(r.true_positives) / r.annotated : 1.0;
  return r;
}

std::string detection_json(const DetectionReport& r) {
  json j{{"precision", r.precision},
         {"recall", r.recall},
         {"true_positives", r.true_positives},
         {"predicted", r.predicted},
         {"annotated", r.annotated},
         {"degenerate_precision", r.degenerate_precision},
         {"degenerate_recall", r.degenerate_recall}};
  return j.dump(2);
}

std::optional<InteractionClass> majority_vote(std::span<const InteractionClass> labels) {
  if (labels.empty()) return std::nullopt;
  std::array<int, kNumInteractionClasses> count{};
  for (auto c : labels) ++count[static_cast<std::size_t>(c)];
  const auto it = std::max_element(count.begin(), count.end());  // first maximum wins ties
  return static_cast<InteractionClass>(it - count.begin());
}

void GroupingReport::merge(const GroupingReport& o) {
  persons += o.persons;
  membership_hits += o.membership_hits;
  activity_hits += o.activity_hits;
  membership_accuracy = persons ? static_cast<double>(membership_hits) / persons : 0.0;
  social_activity_accuracy = persons ? static_cast<double>(activity_hits) / persons : 0.0;
}

namespace {

struct PartitionInfo {
  std::map<int, std::size_t> group_of;
  std::vector<std::optional<InteractionClass>> activity;
};

PartitionInfo describe_partition(std::span<const std::vector<int>> groups, std::span<const LabeledPair> labels,
                                 const char* what) {
  PartitionInfo info;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (int p : groups[g]) {
      if (!info.group_of.emplace(p, g).second) {
        throw Error(ErrorCode::PartitionMismatch, std::string(what) + " groups list person " + std::to_string(p) +
                                                      " twice");
      }
    }
  }
  std::vector<std::vector<InteractionClass>> votes(groups.size());
  for (const auto& l : labels) {
    auto ia = info.group_of.find(l.a);
    auto ib = info.group_of.find(l.b);
    if (ia == info.group_of.end() || ib == info.group_of.end() || ia->second != ib->second) continue;
    votes[ia->second].push_back(l.label);
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    info.activity.push_back(groups[g].size() > 1 ? majority_vote(votes[g]) : std::nullopt);
  }
  return info;
}

}  // namespace

GroupingReport grouping_scores(std::span<const std::vector<int>> pred_groups, std::span<const LabeledPair> pred_labels,
                               std::span<const std::vector<int>> gt_groups, std::span<const LabeledPair> gt_labels) {
  const PartitionInfo pred = describe_partition(pred_groups, pred_labels, "predicted");
  const PartitionInfo gt = describe_partition(gt_groups, gt_labels, "ground-truth");
  if (pred.group_of.size() != gt.group_of.size() ||
      !std::equal(pred.group_of.begin(), pred.group_of.end(), gt.group_of.begin(),
                  [](const auto& l, const auto& r) { return l.first == r.first; })) {
    throw Error(ErrorCode::PartitionMismatch, "predicted and ground-truth groups cover different persons");
  }
  auto sorted = [](std::vector<int> v) {
    std::sort(v.begin(), v.end());
    return v;
  };
  GroupingReport r;
  for (const auto& [person, pg] : pred.group_of) {
    const std::size_t gg = gt.group_of.at(person);
    ++r.persons;
    if (sorted(pred_groups[pg]) == sorted(gt_groups[gg])) ++r.membership_hits;
    if (pred.activity[pg] == gt.activity[gg]) ++r.activity_hits;
  }
  r.membership_accuracy = r.persons ? static_cast<double>(r.membership_hits) / r.persons : 0.0;
  r.social_activity_accuracy = r.persons ? static_cast<double>(r.activity_hits) / r.persons : 0.0;
  return r;
}

std::string grouping_json(const GroupingReport& r) {
  json j{{"membership_accuracy", r.membership_accuracy},
         {"social_activity_accuracy", r.social_activity_accuracy},
         {"persons", r.persons},
         {"membership_hits", r.membership_hits},
         {"activity_hits", r.activity_hits}};
  return j.dump(2);
}

std::vector<LabeledPair> ground_truth_pairs(const SceneSequence& seq, const Frame& frame) {
  std::vector<LabeledPair> out;
  auto it = seq.labels.find(frame.frame_id);
  if (it == seq.labels.end()) return out;
  for (const auto& l : it->second) {
    if (l.label && frame.find(l.a) && frame.find(l.b)) out.push_back({l.a, l.b, *l.label});
  }
  return out;
}

std::vector<std::vector<int>> ground_truth_groups(const SceneSequence& seq, const Frame& frame) {
  InteractionGraph g;
  for (const auto& p : frame.persons) g.nodes.push_back(p.track_id);
  std::sort(g.nodes.begin(), g.nodes.end());
  for (const auto& l : ground_truth_pairs(seq, frame)) g.edges.push_back({l.a, l.b, 1.0});
  return build_groups(g);
}

}  // namespace pairint
