#include "pairint/stage2.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "pairint/binary_io.hpp"

namespace pairint {

std::string_view variant_name(Stage2Variant v) noexcept {
  return v == Stage2Variant::Full ? "full" : "no-appearance";
}

std::optional<Stage2Variant> parse_variant(std::string_view s) noexcept {
  if (s == "full") return Stage2Variant::Full;
  if (s == "no-appearance" || s == "noappearance" || s == "no_appearance") return Stage2Variant::NoAppearance;
  return std::nullopt;
}

std::string_view subset_name(FeatureSubset s) noexcept {
  switch (s) {
    case FeatureSubset::Geometry:
      return "geometry";
    case FeatureSubset::Motion:
      return "motion";
    case FeatureSubset::All:
      break;
  }
  return "all";
}

std::optional<FeatureSubset> parse_subset(std::string_view s) noexcept {
  if (s == "all" || s == "geometry+motion") return FeatureSubset::All;
  if (s == "geometry") return FeatureSubset::Geometry;
  if (s == "motion") return FeatureSubset::Motion;
  return std::nullopt;
}

std::vector<std::size_t> subset_columns(FeatureSubset s) {
  switch (s) {
    case FeatureSubset::Geometry:
      return {0, 1, 2, 3, 4};
    case FeatureSubset::Motion:
      return {5, 6, 7, 8, 9};
    case FeatureSubset::All:
      break;
  }
  return {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
}

std::unique_ptr<Stage2Model> load_stage2(const nn::ParamStore& store) {
  if (!store.contains("buffer.meta.stage") || store.scalar("meta.stage") != 2) {
    throw Error(ErrorCode::CorruptFile, "checkpoint does not hold a stage-2 model");
  }
  Stage2Config cfg;
  const int variant = static_cast<int>(store.scalar("meta.variant"));
  const int subset = static_cast<int>(store.scalar("meta.subset"));
  if (variant < 0 || variant > 1 || subset < 0 || subset > 2) {
    throw Error(ErrorCode::CorruptFile, "unknown stage-2 variant metadata");
  }
  cfg.variant = static_cast<Stage2Variant>(variant);
  cfg.subset = static_cast<FeatureSubset>(subset);
  cfg.app_dim = static_cast<std::size_t>(store.scalar("meta.app_dim"));
  cfg.dropout = std::round(store.scalar("meta.dropout") * 1e6) / 1e6;
  auto model = std::make_unique<Stage2Model>(cfg);
  model->load(store);
  return model;
}

void AppearanceStore::add(int frame_id, int track_id, std::vector<float> v) {
  if (v.size() != dim_) {
    throw Error(ErrorCode::DimensionMismatch, "embedding has " + std::to_string(v.size()) + " values, store holds " +
                                                  std::to_string(dim_));
  }
  if (!entries_.emplace(std::pair(frame_id, track_id), std::move(v)).second) {
    throw Error(ErrorCode::DuplicateKey, "duplicate embedding for frame " + std::to_string(frame_id) + " track " +
                                             std::to_string(track_id));
  }
}

const std::vector<float>& AppearanceStore::get(int frame_id, int track_id) const {
  auto it = entries_.find({frame_id, track_id});
  if (it == entries_.end()) {
    throw Error(ErrorCode::MissingEmbedding, "no embedding for frame " + std::to_string(frame_id) + " track " +
                                                 std::to_string(track_id));
  }
  return it->second;
}

std::string encode_embeddings(const AppearanceStore& store) {
  std::string out = "EMB1";
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(store.dim()));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(store.size()));
  for (const auto& [key, v] : store.entries()) {
    binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(key.first));
    binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(key.second));
    for (float f : v) binio::put_f32(out, f);
  }
  return out;
}

AppearanceStore decode_embeddings(std::span<const char> bytes) {
  // a zero-length file is an empty store
  if (bytes.empty()) return AppearanceStore{};
  binio::Reader r(bytes, "embedding file");
  if (r.get_string(4) != "EMB1") throw Error(ErrorCode::CorruptFile, "not an EMB1 embedding file");
  const auto dim = r.get<std::uint32_t>();
  const auto count = r.get<std::uint32_t>();
  AppearanceStore store(dim);
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto frame = static_cast<int>(r.get<std::uint32_t>());
    const auto track = static_cast<int>(r.get<std::uint32_t>());
    std::vector<float> v(dim);
    for (auto& f : v) f = r.get_f32();
    store.add(frame, track, std::move(v));
  }
  if (r.remaining() != 0) throw Error(ErrorCode::CorruptFile, "trailing bytes in embedding file");
  return store;
}

AppearanceStore load_appearance_embeddings(const std::filesystem::path& path) {
  return decode_embeddings(binio::read_file(path));
}

void save_appearance_embeddings(const AppearanceStore& store, const std::filesystem::path& path) {
  binio::write_file_atomic(path, encode_embeddings(store));
}

namespace {

ClassProbs softmax3(const float* logits) {
  ClassProbs p{};
  double mx = logits[0];
  for (int c = 1; c < kNumInteractionClasses; ++c) mx = std::max(mx, static_cast<double>(logits[c]));
  double z = 0.0;
  for (int c = 0; c < kNumInteractionClasses; ++c) z += p[c] = std::exp(logits[c] - mx);
  for (auto& v : p) v /= z;
  return p;
}

}  // namespace

std::vector<ClassProbs> classify_pairs(Stage2Model& model, std::span<const PairContext> pairs,
                                       const AppearanceStore* store) {
  if (pairs.empty()) return {};
  const std::size_t n = pairs.size();
  nn::Tensor<float> feats({n, kStage2Dims});
  for (std::size_t i = 0; i < n; ++i) {
    if (!all_finite(pairs[i].features.f)) throw Error(ErrorCode::NonFiniteFeature, "stage-2 feature is not finite");
    for (std::size_t c = 0; c < kStage2Dims; ++c) feats(i, c) = static_cast<float>(pairs[i].features.f[c]);
  }
  nn::Rng unused(0);
  std::vector<ClassProbs> out(n);
  if (!model.full()) {
    // the descriptor is symmetric, so both person orders give the same logits
    const auto logits = model.forward(feats, nullptr, nullptr, nn::Mode::Eval, unused);
    for (std::size_t i = 0; i < n; ++i) out[i] = softmax3(&logits(i, 0));
    return out;
  }
  if (!store) throw Error(ErrorCode::MissingEmbedding, "full variant needs an appearance store");
  const std::size_t d = model.config().app_dim;
  if (store->dim() != d) throw Error(ErrorCode::DimensionMismatch, "embedding dimension does not match the model");
  nn::Tensor<float> va({n, d}), vb({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ea = store->get(pairs[i].frame_id, pairs[i].a);
    const auto& eb = store->get(pairs[i].frame_id, pairs[i].b);
    std::copy(ea.begin(), ea.end(), va.row(i).begin());
    std::copy(eb.begin(), eb.end(), vb.row(i).begin());
  }
  const auto ab = model.forward(feats, &va, &vb, nn::Mode::Eval, unused);
  const auto ba = model.forward(feats, &vb, &va, nn::Mode::Eval, unused);
  for (std::size_t i = 0; i < n; ++i) {
    std::array<float, kNumInteractionClasses> avg{};
    for (int c = 0; c < kNumInteractionClasses; ++c) avg[c] = 0.5f * (ab(i, c) + ba(i, c));
    out[i] = softmax3(avg.data());
  }
  return out;
}

ClassProbs classify_pair(Stage2Model& model, const PairContext& pair, const AppearanceStore* store) {
  return classify_pairs(model, std::span<const PairContext>(&pair, 1), store).front();
}

InteractionClass argmax_class(const ClassProbs& p) noexcept {
  return static_cast<InteractionClass>(std::max_element(p.begin(), p.end()) - p.begin());
}

std::string classification_json_line(const PairContext& pair, const ClassProbs& probs, const std::string& scene) {
  nlohmann::json j;
  if (!scene.empty()) j["scene"] = scene;
  j["frame_id"] = pair.frame_id;
  j["a"] = pair.a;
  j["b"] = pair.b;
  j["label"] = std::string(label_name(argmax_class(probs)));
  j["probs"] = probs;
  return j.dump();
}

}  // namespace pairint
