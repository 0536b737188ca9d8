#include "pairint/stage1.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>

namespace pairint {

std::unique_ptr<Stage1Model> load_stage1(const nn::ParamStore& store) {
  if (!store.contains("buffer.meta.stage") || store.scalar("meta.stage") != 1) {
    throw Error(ErrorCode::CorruptFile, "checkpoint does not hold a stage-1 model");
  }
  Stage1Config cfg;
  cfg.hidden1 = static_cast<std::size_t>(store.scalar("meta.hidden1"));
  cfg.hidden2 = static_cast<std::size_t>(store.scalar("meta.hidden2"));
  // stored as float; round to the nearest representable probability
  cfg.dropout = std::round(store.scalar("meta.dropout") * 1e6) / 1e6;
  auto model = std::make_unique<Stage1Model>(cfg);
  model->load(store);
  return model;
}

std::vector<double> score_pairs(Stage1Model& model, std::span<const Stage1Features> g) {
  if (g.empty()) return {};
  nn::Tensor<float> x({g.size(), kStage1Dims});
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!all_finite(g[i].g)) throw Error(ErrorCode::NonFiniteFeature, "stage-1 feature is not finite");
    for (std::size_t c = 0; c < kStage1Dims; ++c) x(i, c) = static_cast<float>(g[i].g[c]);
  }
  nn::Rng unused(0);
  const auto logits = model.forward(x, nn::Mode::Eval, unused);
  std::vector<double> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    // softmax over two logits
    const double d = static_cast<double>(logits(i, 1 - kInteractingIndex)) - logits(i, kInteractingIndex);
    // kept strictly inside (0, 1) so theta = 1 never admits an edge
    out[i] = std::clamp(1.0 / (1.0 + std::exp(d)), std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
  }
  return out;
}

double score_pair(Stage1Model& model, const Stage1Features& g) {
  return score_pairs(model, std::span<const Stage1Features>(&g, 1)).front();
}

InteractionGraph detect(std::span<const ScoredPair> pairs, std::vector<int> nodes, double theta) {
  if (!(theta >= 0.0 && theta <= 1.0)) {
    throw Error(ErrorCode::InvalidThreshold, "theta must lie in [0, 1], got " + std::to_string(theta));
  }
  InteractionGraph graph;
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  graph.nodes = std::move(nodes);
  for (const auto& p : pairs) {
    if (p.score >= theta) graph.edges.push_back({std::min(p.a, p.b), std::max(p.a, p.b), p.score});
  }
  return graph;
}

std::vector<std::vector<int>> build_groups(const InteractionGraph& graph) {
  std::map<int, std::size_t> index;
  for (int n : graph.nodes) index.emplace(n, index.size());
  std::vector<std::size_t> parent(index.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (const auto& e : graph.edges) {
    auto ia = index.find(e.a);
    auto ib = index.find(e.b);
    if (ia == index.end() || ib == index.end()) {
      throw Error(ErrorCode::InvalidParams, "edge references a node outside the graph");
    }
    const std::size_t ra = find(ia->second);
    const std::size_t rb = find(ib->second);
    if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
  }
  // nodes are visited in ascending id order, so groups come out sorted and
  // ordered by their smallest member
  std::map<std::size_t, std::size_t> slot;
  std::vector<std::vector<int>> groups;
  for (const auto& [id, i] : index) {
    const std::size_t r = find(i);
    auto [it, fresh] = slot.emplace(r, groups.size());
    if (fresh) groups.emplace_back();
    groups[it->second].push_back(id);
  }
  return groups;
}

std::vector<Edge> propose(Stage1Model& model, const Frame& frame, double theta) {
  if (!(theta >= 0.0 && theta <= 1.0)) {
    throw Error(ErrorCode::InvalidThreshold, "theta must lie in [0, 1], got " + std::to_string(theta));
  }
  const auto pairs = enumerate_pairs(frame);
  std::vector<Stage1Features> feats;
  feats.reserve(pairs.size());
  const FrameDims dims{frame.width, frame.height};
  for (const auto& [a, b] : pairs) feats.push_back(stage1_geometry(a.bbox, b.bbox, dims));
  const auto scores = score_pairs(model, feats);
  std::vector<Edge> out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (scores[i] >= theta) {
      const int a = pairs[i].first.track_id;
      const int b = pairs[i].second.track_id;
      out.push_back({std::min(a, b), std::max(a, b), scores[i]});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Edge& x, const Edge& y) {
    if (x.score != y.score) return x.score > y.score;
    return std::pair(x.a, x.b) < std::pair(y.a, y.b);
  });
  return out;
}

std::string proposals_json_line(int frame_id, std::span<const Edge> edges, const std::string& scene) {
  nlohmann::json j;
  if (!scene.empty()) j["scene"] = scene;
  j["frame_id"] = frame_id;
  j["pairs"] = nlohmann::json::array();
  for (const auto& e : edges) j["pairs"].push_back({{"a", e.a}, {"b", e.b}, {"score", e.score}});
  return j.dump();
}

}  // namespace pairint
