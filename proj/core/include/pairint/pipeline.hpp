#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pairint/data.hpp"
#include "pairint/features.hpp"
#include "pairint/flow.hpp"
#include "pairint/stage1.hpp"
#include "pairint/stage2.hpp"

namespace pairint {

struct PreprocessConfig {
  FilterConfig filter;
  int interval = kDefaultSampleInterval;
  FarnebackParams flow;
  bool ego_motion = false;

  MaskPolicy mask() const noexcept { return {flow.border_ring()}; }
};

/// Flow for frame i of a sequence, from i to i + 1 (the last frame uses
/// i - 1 to i; a single-frame sequence gets a zero field). Pyramids are
/// cached, so walking the frames in order builds each one once.
class FlowProvider {
 public:
  FlowProvider(const SceneSequence& seq, const FarnebackParams& params, bool ego_motion = false);

  FlowField flow_at(std::size_t index);
  std::size_t pyramids_built() const noexcept { return built_; }

 private:
  const FlowPyramid& pyramid(std::size_t index);

  const SceneSequence& seq_;
  FarnebackParams params_;
  bool ego_motion_;
  std::map<std::size_t, FlowPyramid> cache_;
  std::size_t built_ = 0;
};

/// Pairs of one filtered frame with their Stage-1 descriptors.
struct FramePairs {
  Frame frame;
  std::vector<PersonPair> pairs;
  std::vector<Stage1Features> g;
};

FramePairs frame_pairs(const Frame& filtered);

/// Stage-2 descriptors of the selected pairs, per-person statistics shared.
std::vector<Stage2Features> motion_features(const FramePairs& fp, std::span<const std::size_t> which,
                                            const FlowField& flow, MaskPolicy mask);
/// Same on the horizontally mirrored frame and flow.
std::vector<Stage2Features> mirrored_motion_features(const FramePairs& fp, std::span<const std::size_t> which,
                                                     const FlowField& flow, MaskPolicy mask);

struct InferConfig {
  PreprocessConfig prep;
  double theta = kDefaultTheta;

  InferConfig() { prep.interval = 1; }
};

struct Classified {
  PairContext pair;
  ClassProbs probs{};
  InteractionClass label() const noexcept { return argmax_class(probs); }
};

struct FrameResult {
  std::size_t scene = 0;
  int frame_id = 0;
  std::vector<Edge> proposals;
  std::vector<Classified> classified;
  std::vector<std::vector<int>> groups;
};

struct InferStats {
  std::size_t frames = 0;
  std::size_t pairs = 0;
  std::size_t proposals = 0;
  std::size_t persons = 0;
  double seconds = 0.0;
  double fps() const noexcept { return seconds > 0 ? frames / seconds : 0.0; }
};

/// filter -> Stage 1 -> flow (only when something was proposed) -> Stage 2 ->
/// groups, frame by frame in order. Single-threaded.
InferStats run_inference(const Dataset& data, Stage1Model& s1, Stage2Model& s2, const AppearanceStore* store,
                         const InferConfig& cfg, const std::function<void(const FrameResult&)>& sink);

std::string groups_json_line(int frame_id, const std::vector<std::vector<int>>& groups, const std::string& scene = {});

struct EfficiencyReport {
  std::uint64_t stage1_flops = 0;
  /// Stage-2 cost per classified pair (two passes for the full variant).
  std::uint64_t stage2_flops = 0;
  std::uint64_t per_pair_flops = 0;
  std::uint64_t flow_flops_per_frame = 0;
  std::size_t frames = 0;
  double mean_persons = 0.0;
  double seconds = 0.0;
  double fps = 0.0;
};

/// FLOPs by the layer counting convention and the wall-clock rate of
/// run_inference over the given frames.
EfficiencyReport efficiency_report(const Dataset& data, Stage1Model& s1, Stage2Model& s2, const AppearanceStore* store,
                                   const InferConfig& cfg);
std::uint64_t stage2_pair_flops(const Stage2Model& s2);
std::string efficiency_json(const EfficiencyReport& r);

}  // namespace pairint
