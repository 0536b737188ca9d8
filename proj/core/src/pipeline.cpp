#include "pairint/pipeline.hpp"

#include <chrono>
#include <nlohmann/json.hpp>

#include "pairint/error.hpp"
#include "pairint/nn/layers.hpp"

namespace pairint {

FlowProvider::FlowProvider(const SceneSequence& seq, const FarnebackParams& params, bool ego_motion)
    : seq_(seq), params_(params), ego_motion_(ego_motion) {
  params_.validate();
}

const FlowPyramid& FlowProvider::pyramid(std::size_t index) {
  auto it = cache_.find(index);
  if (it != cache_.end()) return it->second;
  // only neighbours of the current frame are ever needed again
  while (!cache_.empty() && cache_.begin()->first + 2 < index) cache_.erase(cache_.begin());
  ++built_;
  return cache_.emplace(index, build_flow_pyramid(load_frame_image(seq_, seq_.frames.at(index)), params_))
      .first->second;
}

FlowField FlowProvider::flow_at(std::size_t index) {
  const auto& frames = seq_.frames;
  if (index >= frames.size()) throw Error(ErrorCode::InvalidParams, "frame index out of range");
  if (frames.size() == 1) return FlowField(frames[0].width, frames[0].height);
  const std::size_t from = index + 1 < frames.size() ? index : index - 1;
  const FlowPyramid& prev = pyramid(from);
  const FlowPyramid& next = pyramid(from + 1);
  FlowField flow = estimate_flow(prev, next, params_);
  if (!ego_motion_) return flow;
  std::vector<BBox> boxes;
  for (const auto& p : frames[index].persons) boxes.push_back(p.bbox);
  return compensate_ego_motion(flow, boxes);
}

FramePairs frame_pairs(const Frame& filtered) {
  FramePairs fp;
  fp.frame = filtered;
  fp.pairs = enumerate_pairs(filtered);
  const FrameDims dims{filtered.width, filtered.height};
  fp.g.reserve(fp.pairs.size());
  for (const auto& [a, b] : fp.pairs) fp.g.push_back(stage1_geometry(a.bbox, b.bbox, dims));
  return fp;
}

namespace {

std::vector<Stage2Features> pair_features(const std::vector<std::pair<BBox, BBox>>& boxes,
                                          const std::vector<std::pair<int, int>>& ids, const FlowField& flow,
                                          MaskPolicy mask) {
  std::map<int, PerPersonMotion> per;
  std::vector<Stage2Features> out;
  out.reserve(boxes.size());
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    const auto& [a, b] = boxes[k];
    auto ia = per.find(ids[k].first);
    if (ia == per.end()) ia = per.emplace(ids[k].first, per_person_motion(a, flow, mask)).first;
    auto ib = per.find(ids[k].second);
    if (ib == per.end()) ib = per.emplace(ids[k].second, per_person_motion(b, flow, mask)).first;
    out.push_back(stage2_features(a, b, flow, ia->second, ib->second, mask));
  }
  return out;
}

}  // namespace

std::vector<Stage2Features> motion_features(const FramePairs& fp, std::span<const std::size_t> which,
                                            const FlowField& flow, MaskPolicy mask) {
  std::vector<std::pair<BBox, BBox>> boxes;
  std::vector<std::pair<int, int>> ids;
  for (std::size_t i : which) {
    boxes.emplace_back(fp.pairs.at(i).first.bbox, fp.pairs.at(i).second.bbox);
    ids.emplace_back(fp.pairs[i].first.track_id, fp.pairs[i].second.track_id);
  }
  return pair_features(boxes, ids, flow, mask);
}

std::vector<Stage2Features> mirrored_motion_features(const FramePairs& fp, std::span<const std::size_t> which,
                                                     const FlowField& flow, MaskPolicy mask) {
  const FlowField mirrored = mirror_flow(flow);
  std::vector<std::pair<BBox, BBox>> boxes;
  std::vector<std::pair<int, int>> ids;
  for (std::size_t i : which) {
    boxes.emplace_back(flip_box(fp.pairs.at(i).first.bbox, fp.frame.width),
                       flip_box(fp.pairs.at(i).second.bbox, fp.frame.width));
    ids.emplace_back(fp.pairs[i].first.track_id, fp.pairs[i].second.track_id);
  }
  return pair_features(boxes, ids, mirrored, mask);
}

InferStats run_inference(const Dataset& data, Stage1Model& s1, Stage2Model& s2, const AppearanceStore* store,
                         const InferConfig& cfg, const std::function<void(const FrameResult&)>& sink) {
  if (!(cfg.theta >= 0.0 && cfg.theta <= 1.0)) {
    throw Error(ErrorCode::InvalidThreshold, "theta must lie in [0, 1], got " + std::to_string(cfg.theta));
  }
  InferStats stats;
  const auto t0 = std::chrono::steady_clock::now();
  const MaskPolicy mask = cfg.prep.mask();
  for (std::size_t s = 0; s < data.size(); ++s) {
    const SceneSequence& seq = data[s];
    FlowProvider flows(seq, cfg.prep.flow, cfg.prep.ego_motion);
    for (std::size_t i : sampled_indices(seq.frames.size(), cfg.prep.interval)) {
      const Frame filtered = filter_observations(seq.frames[i], cfg.prep.filter.border_margin,
                                                 cfg.prep.filter.drop_occluded, cfg.prep.filter.occlusion_iou);
      const FramePairs fp = frame_pairs(filtered);
      FrameResult res;
      res.scene = s;
      res.frame_id = filtered.frame_id;

      const auto scores = score_pairs(s1, fp.g);
      std::vector<std::size_t> chosen;
      for (std::size_t k = 0; k < fp.pairs.size(); ++k) {
        if (scores[k] >= cfg.theta) chosen.push_back(k);
      }
      std::stable_sort(chosen.begin(), chosen.end(), [&](std::size_t x, std::size_t y) {
        if (scores[x] != scores[y]) return scores[x] > scores[y];
        return std::pair(fp.pairs[x].first.track_id, fp.pairs[x].second.track_id) <
               std::pair(fp.pairs[y].first.track_id, fp.pairs[y].second.track_id);
      });
      for (std::size_t k : chosen) {
        res.proposals.push_back({fp.pairs[k].first.track_id, fp.pairs[k].second.track_id, scores[k]});
      }

      if (!chosen.empty()) {
        const FlowField flow = flows.flow_at(i);
        const auto feats = motion_features(fp, chosen, flow, mask);
        std::vector<PairContext> ctx;
        for (std::size_t k = 0; k < chosen.size(); ++k) {
          ctx.push_back({filtered.frame_id, fp.pairs[chosen[k]].first.track_id, fp.pairs[chosen[k]].second.track_id,
                         feats[k]});
        }
        const auto probs = classify_pairs(s2, ctx, store);
        for (std::size_t k = 0; k < ctx.size(); ++k) res.classified.push_back({ctx[k], probs[k]});
      }

      InteractionGraph graph;
      for (const auto& p : filtered.persons) graph.nodes.push_back(p.track_id);
      std::sort(graph.nodes.begin(), graph.nodes.end());
      graph.edges = res.proposals;
      res.groups = build_groups(graph);

      ++stats.frames;
      stats.pairs += fp.pairs.size();
      stats.proposals += res.proposals.size();
      stats.persons += filtered.persons.size();
      if (sink) sink(res);
    }
  }
  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return stats;
}

std::string groups_json_line(int frame_id, const std::vector<std::vector<int>>& groups, const std::string& scene) {
  nlohmann::json j;
  if (!scene.empty()) j["scene"] = scene;
  j["frame_id"] = frame_id;
  j["groups"] = groups;
  return j.dump();
}

std::uint64_t stage2_pair_flops(const Stage2Model& s2) {
  const auto desc = s2.describe();
  const std::uint64_t one = nn::count_flops(desc);
  return s2.full() ? 2 * one : one;
}

EfficiencyReport efficiency_report(const Dataset& data, Stage1Model& s1, Stage2Model& s2, const AppearanceStore* store,
                                   const InferConfig& cfg) {
  EfficiencyReport r;
  r.stage1_flops = nn::count_flops(s1.describe());
  r.stage2_flops = stage2_pair_flops(s2);
  r.per_pair_flops = r.stage1_flops + r.stage2_flops;
  if (!data.empty() && !data.front().frames.empty()) {
    r.flow_flops_per_frame =
        estimate_flow_flops(data.front().frames.front().width, data.front().frames.front().height, cfg.prep.flow);
  }
  const InferStats st = run_inference(data, s1, s2, store, cfg, {});
  r.frames = st.frames;
  r.seconds = st.seconds;
  r.fps = st.fps();
  r.mean_persons = st.frames ? static_cast<double>(st.persons) / st.frames : 0.0;
  return r;
}

std::string efficiency_json(const EfficiencyReport& r) {
  nlohmann::json j{{"stage1_flops_per_pair", r.stage1_flops},
                   {"stage2_flops_per_pair", r.stage2_flops},
                   {"flops_per_pair", r.per_pair_flops},
                   {"flow_flops_per_frame", r.flow_flops_per_frame},
                   {"frames", r.frames},
                   {"mean_persons", r.mean_persons},
                   {"seconds", r.seconds},
                   {"fps", r.fps}};
  return j.dump(2);
}

}  // namespace pairint
