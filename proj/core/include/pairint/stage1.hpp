#pragma once

#include <string>
#include <vector>

#include "pairint/data.hpp"
#include "pairint/features.hpp"
#include "pairint/nn/checkpoint.hpp"
#include "pairint/nn/layers.hpp"

namespace pairint {

inline constexpr double kDefaultTheta = 0.35;
/// Logit index of the "interacting" class.
inline constexpr int kInteractingIndex = 1;

struct Stage1Config {
  std::size_t hidden1 = 32;
  std::size_t hidden2 = 16;
  double dropout = 0.1;
};

/// standardize -> reweight (g + b) * s * w -> Linear/ReLU/Dropout x2 -> Linear(h2 -> 2).
template <class T>
class Stage1Net {
 public:
  explicit Stage1Net(Stage1Config cfg = {}) : cfg_(cfg) {
    standardize_ = &net_.template add<nn::Standardize<T>>("standardize", kStage1Dims);
    reweight_ = &net_.template add<nn::FeatureReweight<T>>("reweight", kStage1Dims);
    net_.template add<nn::Linear<T>>("fc1", kStage1Dims, cfg.hidden1);
    net_.template add<nn::ReLU<T>>("relu1", cfg.hidden1);
    net_.template add<nn::Dropout<T>>("drop1", cfg.hidden1, cfg.dropout);
    net_.template add<nn::Linear<T>>("fc2", cfg.hidden1, cfg.hidden2);
    net_.template add<nn::ReLU<T>>("relu2", cfg.hidden2);
    net_.template add<nn::Dropout<T>>("drop2", cfg.hidden2, cfg.dropout);
    net_.template add<nn::Linear<T>>("fc3", cfg.hidden2, 2);
    refresh();
  }

  Stage1Net(const Stage1Net&) = delete;
  Stage1Net& operator=(const Stage1Net&) = delete;

  void init(nn::Rng& rng) { net_.init(rng); }

  nn::Tensor<T> forward(const nn::Tensor<T>& g, nn::Mode mode, nn::Rng& rng) { return net_.forward(g, mode, rng); }
  nn::Tensor<T> backward(const nn::Tensor<T>& dlogits) { return net_.backward(dlogits); }

  void set_feature_stats(const FeatureStats& stats) { standardize_->set(stats.mean, stats.std); }

  nn::FeatureReweight<T>& reweight() { return *reweight_; }
  const Stage1Config& config() const noexcept { return cfg_; }
  const std::vector<nn::ParamRef<T>>& params() const noexcept { return params_; }
  const std::vector<nn::BufferRef<T>>& buffers() const noexcept { return buffers_; }

  std::vector<nn::LayerDesc> describe() const {
    std::vector<nn::LayerDesc> d;
    net_.describe(d);
    return d;
  }

  nn::ParamStore to_store() const {
    nn::ParamStore store;
    nn::export_tensors<T>(params_, buffers_, store);
    store.set_scalar("meta.stage", 1);
    store.set_scalar("meta.hidden1", static_cast<double>(cfg_.hidden1));
    store.set_scalar("meta.hidden2", static_cast<double>(cfg_.hidden2));
    store.set_scalar("meta.dropout", cfg_.dropout);
    return store;
  }

  void load(const nn::ParamStore& store) { nn::import_tensors<T>(store, params_, buffers_); }

 private:
  void refresh() {
    params_.clear();
    buffers_.clear();
    net_.collect("", params_, buffers_);
  }

  Stage1Config cfg_;
  nn::Sequential<T> net_;
  nn::Standardize<T>* standardize_ = nullptr;
  nn::FeatureReweight<T>* reweight_ = nullptr;
  std::vector<nn::ParamRef<T>> params_;
  std::vector<nn::BufferRef<T>> buffers_;
};

using Stage1Model = Stage1Net<float>;

/// Reads the architecture from the checkpoint metadata and loads the weights.
std::unique_ptr<Stage1Model> load_stage1(const nn::ParamStore& store);

/// Probability of interaction (eval mode, softmax over the two logits).
double score_pair(Stage1Model& model, const Stage1Features& g);
std::vector<double> score_pairs(Stage1Model& model, std::span<const Stage1Features> g);

struct Edge {
  int a = 0;
  int b = 0;
  double score = 0.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

struct InteractionGraph {
  std::vector<int> nodes;
  std::vector<Edge> edges;
};

struct ScoredPair {
  int a = 0;
  int b = 0;
  double score = 0.0;
};

/// Keeps pairs with score >= theta. theta outside [0, 1] is InvalidThreshold.
InteractionGraph detect(std::span<const ScoredPair> pairs, std::vector<int> nodes, double theta);

/// Connected components, each sorted ascending, ordered by smallest member.
std::vector<std::vector<int>> build_groups(const InteractionGraph& graph);

/// Scores every pair of the frame and returns those >= theta, highest score
/// first (ties by (a, b)).
std::vector<Edge> propose(Stage1Model& model, const Frame& frame, double theta);

/// {"frame_id": .., "pairs": [{"a": .., "b": .., "score": ..}]}
std::string proposals_json_line(int frame_id, std::span<const Edge> edges, const std::string& scene = {});

}  // namespace pairint
