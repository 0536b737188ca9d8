#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pairint/evaluator.hpp"
#include "pairint/nn/tensor.hpp"
#include "pairint/pipeline.hpp"
#include "pairint/stage1.hpp"
#include "pairint/stage2.hpp"

namespace pairint {

enum class PairSource { GroundTruth, Stage1Proposals };

std::string_view pair_source_name(PairSource s) noexcept;
std::optional<PairSource> parse_pair_source(std::string_view s) noexcept;

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 1e-5;
  int epochs = 50;
  int batch_size = 64;
  std::uint64_t seed = 0;
  double neg_pos_ratio = 3.0;
  double flip_prob = 0.5;
  PairSource stage2_pair_source = PairSource::GroundTruth;
  double focal_gamma = 2.0;
  int eval_every = 1;
  double val_fraction = 0.2;
  /// Threshold used for Stage-1 validation and for Stage-1 proposals.
  double theta = kDefaultTheta;
  PreprocessConfig prep;

  /// Throws InvalidParams on out-of-range values.
  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  std::optional<double> val_macro_f1;
  std::optional<double> val_accuracy;
};

struct TrainReport {
  std::string stage;
  std::uint64_t seed = 0;
  std::vector<EpochLog> epochs;
  int best_epoch = 0;
  double best_macro_f1 = 0.0;
  std::optional<MetricReport> best_val;
  /// Detection view of the best Stage-1 validation pass (positive class).
  std::optional<DetectionReport> best_detection;
  std::size_t train_samples = 0;
  std::size_t val_samples = 0;
  std::string checkpoint_path;
  double wall_seconds = 0.0;
};

std::string train_report_json(const TrainReport& r);

/// Whole scenes go to one side. Deterministic given the seed.
/// Throws TooFewScenes for fewer than two scenes.
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double val_fraction, std::uint64_t seed);

struct Stage1Sample {
  int scene = 0;
  int frame_id = 0;
  int a = 0;
  int b = 0;
  Stage1Features g;
  bool positive = false;
};

/// Every interacting pair plus, per frame, round(ratio x positives) uniformly
/// drawn non-interacting pairs (all of them if fewer exist). The sequence is
/// expected to be filtered and sampled already. Throws NoPositives.
std::vector<Stage1Sample> build_stage1_dataset(const SceneSequence& seq, double neg_pos_ratio, nn::Rng& rng,
                                               int scene_index = 0);

struct Stage2Sample {
  int scene = 0;
  int frame_id = 0;
  int a = 0;
  int b = 0;
  Stage2Features f;
  Stage2Features f_flip;
  int label = 0;
};

/// Labeled pairs of the sampled frames with their 10D descriptors. With a
/// Stage-1 model, only pairs it proposes at `theta` are kept.
std::vector<Stage2Sample> build_stage2_dataset(const SceneSequence& seq, const PreprocessConfig& prep,
                                               bool with_flip, int scene_index = 0, Stage1Model* proposer = nullptr,
                                               double theta = kDefaultTheta);

struct Stage1Result {
  std::unique_ptr<Stage1Model> model;
  TrainReport report;
};

struct Stage2Result {
  std::unique_ptr<Stage2Model> model;
  TrainReport report;
};

Stage1Result train_stage1(const Dataset& data, const TrainConfig& cfg, const Stage1Config& arch = {});

/// `store` is required for the full variant; `proposer` when the pair source
/// is Stage-1 proposals.
Stage2Result train_stage2(const Dataset& data, const Stage2Config& arch, const TrainConfig& cfg,
                          const AppearanceStore* store = nullptr, Stage1Model* proposer = nullptr);

/// Stage-1 metrics over every pair of the sampled, filtered frames.
struct Stage1Eval {
  MetricReport binary;
  DetectionReport detection;
};
Stage1Eval evaluate_stage1(Stage1Model& model, const Dataset& data, const PreprocessConfig& prep, double theta);

/// Stage-2 metrics on precomputed samples.
MetricReport stage2_metrics(Stage2Model& model, const std::vector<Stage2Sample>& samples,
                            const AppearanceStore* store = nullptr);
/// Stage-2 metrics on ground-truth interacting pairs.
MetricReport evaluate_stage2(Stage2Model& model, const Dataset& data, const PreprocessConfig& prep,
                             const AppearanceStore* store = nullptr);

}  // namespace pairint
