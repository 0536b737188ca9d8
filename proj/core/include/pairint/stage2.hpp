#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pairint/data.hpp"
#include "pairint/features.hpp"
#include "pairint/nn/checkpoint.hpp"
#include "pairint/nn/layers.hpp"

namespace pairint {

enum class Stage2Variant { Full = 0, NoAppearance = 1 };

/// Which part of the 10D descriptor feeds the encoder (Table I style ablation).
enum class FeatureSubset { All = 0, Geometry = 1, Motion = 2 };

std::string_view variant_name(Stage2Variant v) noexcept;
std::optional<Stage2Variant> parse_variant(std::string_view s) noexcept;
std::string_view subset_name(FeatureSubset s) noexcept;
std::optional<FeatureSubset> parse_subset(std::string_view s) noexcept;

/// Column indices of the 10D descriptor used by a subset.
std::vector<std::size_t> subset_columns(FeatureSubset s);

inline constexpr std::size_t kPersonEmbedDim = 256;
inline constexpr std::size_t kGeomEmbedDim = 128;
inline constexpr std::size_t kRelationDim = 4 * kPersonEmbedDim + kGeomEmbedDim;

struct Stage2Config {
  Stage2Variant variant = Stage2Variant::NoAppearance;
  FeatureSubset subset = FeatureSubset::All;
  std::size_t app_dim = 0;
  double dropout = 0.1;
};

namespace detail {

template <class T>
std::unique_ptr<nn::Sequential<T>> mlp_bn_silu(std::size_t in, std::size_t hidden, std::size_t out) {
  auto s = std::make_unique<nn::Sequential<T>>();
  s->template add<nn::Linear<T>>("fc1", in, hidden);
  s->template add<nn::BatchNorm1d<T>>("bn1", hidden);
  s->template add<nn::SiLU<T>>("act1", hidden);
  s->template add<nn::Linear<T>>("fc2", hidden, out);
  s->template add<nn::BatchNorm1d<T>>("bn2", out);
  s->template add<nn::SiLU<T>>("act2", out);
  return s;
}

template <class T>
std::unique_ptr<nn::Sequential<T>> relation_head(std::size_t in, double p) {
  auto head = std::make_unique<nn::Sequential<T>>();
  const std::array<std::size_t, 4> widths{in, 512, 256, 128};
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    auto body = std::make_unique<nn::Sequential<T>>();
    body->template add<nn::Linear<T>>("fc", widths[k], widths[k + 1]);
    body->template add<nn::BatchNorm1d<T>>("bn", widths[k + 1]);
    body->template add<nn::SiLU<T>>("act", widths[k + 1]);
    body->template add<nn::Dropout<T>>("drop", widths[k + 1], p);
    head->template add<nn::Residual<T>>("block" + std::to_string(k + 1), std::move(body));
  }
  head->template add<nn::Linear<T>>("out", 128, kNumInteractionClasses);
  return head;
}

}  // namespace detail

/// R = concat(eA, eB, |eA - eB|, eA * eB, s).
template <class T>
std::vector<T> build_relation_vector(std::span<const T> ea, std::span<const T> eb, std::span<const T> s) {
  if (ea.size() != kPersonEmbedDim || eb.size() != kPersonEmbedDim || s.size() != kGeomEmbedDim) {
    throw Error(ErrorCode::DimensionMismatch, "relation vector expects 256 + 256 + 128 inputs");
  }
  std::vector<T> r;
  r.reserve(kRelationDim);
  r.insert(r.end(), ea.begin(), ea.end());
  r.insert(r.end(), eb.begin(), eb.end());
  for (std::size_t i = 0; i < ea.size(); ++i) r.push_back(std::abs(ea[i] - eb[i]));
  for (std::size_t i = 0; i < ea.size(); ++i) r.push_back(ea[i] * eb[i]);
  r.insert(r.end(), s.begin(), s.end());
  return r;
}

/// Relation network. NoAppearance feeds the encoded descriptor straight into
/// the head; Full adds the shared person encoder on both appearance vectors.
template <class T>
class Stage2Net {
 public:
  explicit Stage2Net(Stage2Config cfg) : cfg_(cfg), cols_(subset_columns(cfg.subset)) {
    if (cfg.variant == Stage2Variant::Full && cfg.app_dim == 0) {
      throw Error(ErrorCode::InvalidParams, "full variant needs the appearance dimension");
    }
    standardize_ = std::make_unique<nn::Standardize<T>>(cols_.size());
    geom_ = detail::mlp_bn_silu<T>(cols_.size(), 64, kGeomEmbedDim);
    if (full()) person_ = detail::mlp_bn_silu<T>(cfg.app_dim, 512, kPersonEmbedDim);
    head_ = detail::relation_head<T>(full() ? kRelationDim : kGeomEmbedDim, cfg.dropout);
    standardize_->collect("standardize.", params_, buffers_);
    geom_->collect("geom_enc.", params_, buffers_);
    if (person_) person_->collect("person_enc.", params_, buffers_);
    head_->collect("head.", params_, buffers_);
  }

  Stage2Net(const Stage2Net&) = delete;
  Stage2Net& operator=(const Stage2Net&) = delete;

  bool full() const noexcept { return cfg_.variant == Stage2Variant::Full; }
  const Stage2Config& config() const noexcept { return cfg_; }
  const std::vector<std::size_t>& columns() const noexcept { return cols_; }

  void init(nn::Rng& rng) {
    geom_->init(rng);
    if (person_) person_->init(rng);
    head_->init(rng);
  }

  /// Statistics over the full 10D descriptor; only the subset's columns are kept.
  void set_feature_stats(const FeatureStats& stats) {
    if (stats.dims() != kStage2Dims) throw Error(ErrorCode::StatsDimensionMismatch, "stage-2 statistics must be 10D");
    std::vector<double> m, s;
    for (auto c : cols_) {
      m.push_back(stats.mean[c]);
      s.push_back(stats.std[c]);
    }
    standardize_->set(m, s);
  }

  /// feats: B x 10 raw descriptors. va/vb: B x app_dim (Full only).
  nn::Tensor<T> forward(const nn::Tensor<T>& feats, const nn::Tensor<T>* va, const nn::Tensor<T>* vb, nn::Mode mode,
                        nn::Rng& rng) {
    nn::require_cols(feats, kStage2Dims, "stage-2 features");
    const std::size_t batch = feats.rows();
    nn::Tensor<T> sub({batch, cols_.size()});
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t k = 0; k < cols_.size(); ++k) sub(b, k) = feats(b, cols_[k]);
    }
    const nn::Tensor<T> s = geom_->forward(standardize_->forward(sub, mode, rng), mode, rng);
    if (!full()) return head_->forward(s, mode, rng);

    if (!va || !vb) throw Error(ErrorCode::MissingEmbedding, "full variant needs both appearance vectors");
    nn::require_cols(*va, cfg_.app_dim, "appearance A");
    nn::require_cols(*vb, cfg_.app_dim, "appearance B");
    if (va->rows() != batch || vb->rows() != batch) {
      throw Error(ErrorCode::ShapeMismatch, "appearance batch does not match feature batch");
    }
    // the shared encoder sees A and B stacked in one batch
    nn::Tensor<T> stacked({2 * batch, cfg_.app_dim});
    std::copy(va->data.begin(), va->data.end(), stacked.data.begin());
    std::copy(vb->data.begin(), vb->data.end(), stacked.data.begin() + static_cast<std::ptrdiff_t>(va->size()));
    e_ = person_->forward(stacked, mode, rng);
    nn::Tensor<T> r({batch, kRelationDim});
    const std::size_t d = kPersonEmbedDim;
    for (std::size_t b = 0; b < batch; ++b) {
      const T* ea = &e_(b, 0);
      const T* eb = &e_(batch + b, 0);
      T* out = &r(b, 0);
      for (std::size_t i = 0; i < d; ++i) {
        out[i] = ea[i];
        out[d + i] = eb[i];
        out[2 * d + i] = std::abs(ea[i] - eb[i]);
        out[3 * d + i] = ea[i] * eb[i];
      }
      for (std::size_t i = 0; i < kGeomEmbedDim; ++i) out[4 * d + i] = s(b, i);
    }
    if (mode != nn::Mode::Train) e_ = {};
    return head_->forward(r, mode, rng);
  }

  void backward(const nn::Tensor<T>& dlogits) {
    const nn::Tensor<T> dr = head_->backward(dlogits);
    const std::size_t batch = dr.rows();
    nn::Tensor<T> ds({batch, kGeomEmbedDim});
    if (!full()) {
      ds = dr;
    } else {
      if (e_.rows() != 2 * batch) throw Error(ErrorCode::NoCachedForward, "stage-2 backward without forward");
      const std::size_t d = kPersonEmbedDim;
      nn::Tensor<T> de({2 * batch, d});
      for (std::size_t b = 0; b < batch; ++b) {
        const T* ea = &e_(b, 0);
        const T* eb = &e_(batch + b, 0);
        const T* g = &dr(b, 0);
        T* da = &de(b, 0);
        T* db = &de(batch + b, 0);
        for (std::size_t i = 0; i < d; ++i) {
          const T diff = ea[i] - eb[i];
          const T sgn = diff > T(0) ? T(1) : (diff < T(0) ? T(-1) : T(0));
          da[i] = g[i] + g[2 * d + i] * sgn + g[3 * d + i] * eb[i];
          db[i] = g[d + i] - g[2 * d + i] * sgn + g[3 * d + i] * ea[i];
        }
        for (std::size_t i = 0; i < kGeomEmbedDim; ++i) ds(b, i) = g[4 * d + i];
      }
      person_->backward(de);
    }
    standardize_->backward(geom_->backward(ds));
  }

  const std::vector<nn::ParamRef<T>>& params() const noexcept { return params_; }
  const std::vector<nn::BufferRef<T>>& buffers() const noexcept { return buffers_; }

  /// Per-pair inference description. Full inference runs the head on both
  /// person orders and averages the logits; the person encoder runs once per person.
  std::vector<nn::LayerDesc> describe() const {
    std::vector<nn::LayerDesc> d;
    standardize_->describe(d);
    geom_->describe(d);
    if (full()) {
      person_->describe(d);
      person_->describe(d);
      for (int order = 0; order < 2; ++order) {
        d.push_back({"absdiff", kPersonEmbedDim, kPersonEmbedDim});
        d.push_back({"mul", kPersonEmbedDim, kPersonEmbedDim});
        head_->describe(d);
      }
      d.push_back({"average", kNumInteractionClasses, kNumInteractionClasses});
    } else {
      head_->describe(d);
    }
    return d;
  }

  nn::ParamStore to_store() const {
    nn::ParamStore store;
    nn::export_tensors<T>(params_, buffers_, store);
    store.set_scalar("meta.stage", 2);
    store.set_scalar("meta.variant", static_cast<double>(cfg_.variant));
    store.set_scalar("meta.subset", static_cast<double>(cfg_.subset));
    store.set_scalar("meta.app_dim", static_cast<double>(cfg_.app_dim));
    store.set_scalar("meta.dropout", cfg_.dropout);
    return store;
  }

  void load(const nn::ParamStore& store) { nn::import_tensors<T>(store, params_, buffers_); }

 private:
  Stage2Config cfg_;
  std::vector<std::size_t> cols_;
  std::unique_ptr<nn::Standardize<T>> standardize_;
  std::unique_ptr<nn::Sequential<T>> geom_;
  std::unique_ptr<nn::Sequential<T>> person_;
  std::unique_ptr<nn::Sequential<T>> head_;
  std::vector<nn::ParamRef<T>> params_;
  std::vector<nn::BufferRef<T>> buffers_;
  nn::Tensor<T> e_;
};

using Stage2Model = Stage2Net<float>;

std::unique_ptr<Stage2Model> load_stage2(const nn::ParamStore& store);

/// Precomputed appearance embeddings keyed by (frame_id, track_id).
class AppearanceStore {
 public:
  AppearanceStore() = default;
  explicit AppearanceStore(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return entries_.size(); }
  void add(int frame_id, int track_id, std::vector<float> v);
  /// MissingEmbedding when absent.
  const std::vector<float>& get(int frame_id, int track_id) const;
  bool contains(int frame_id, int track_id) const { return entries_.count({frame_id, track_id}) != 0; }
  const std::map<std::pair<int, int>, std::vector<float>>& entries() const noexcept { return entries_; }

 private:
  std::size_t dim_ = 0;
  std::map<std::pair<int, int>, std::vector<float>> entries_;
};

std::string encode_embeddings(const AppearanceStore& store);
AppearanceStore decode_embeddings(std::span<const char> bytes);
AppearanceStore load_appearance_embeddings(const std::filesystem::path& path);
void save_appearance_embeddings(const AppearanceStore& store, const std::filesystem::path& path);

struct PairContext {
  int frame_id = 0;
  int a = 0;
  int b = 0;
  Stage2Features features;
};

using ClassProbs = std::array<double, kNumInteractionClasses>;

/// Eval-mode probabilities. Full averages logits over (a, b) and (b, a).
ClassProbs classify_pair(Stage2Model& model, const PairContext& pair, const AppearanceStore* store = nullptr);
std::vector<ClassProbs> classify_pairs(Stage2Model& model, std::span<const PairContext> pairs,
                                       const AppearanceStore* store = nullptr);

InteractionClass argmax_class(const ClassProbs& p) noexcept;

/// {"frame_id": .., "a": .., "b": .., "label": .., "probs": [..]}
std::string classification_json_line(const PairContext& pair, const ClassProbs& probs, const std::string& scene = {});

}  // namespace pairint
