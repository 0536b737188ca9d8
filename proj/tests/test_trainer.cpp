#include <gtest/gtest.h>

#include <functional>
#include <set>

#include "pairint/error.hpp"
#include "pairint/nn/optim.hpp"
#include "pairint/synth.hpp"
#include "pairint/trainer.hpp"

using namespace pairint;
using IC = InteractionClass;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::Io;
}

const Dataset& corpus() {
  static const Dataset data = [] {
    synth::CorpusSpec cs;
    cs.scenes = 8;
    cs.seed = 21;
    cs.scene.frames = 25;
    cs.scene.width = 320;
    cs.scene.height = 240;
    cs.scene.min_persons = 3;
    cs.scene.max_persons = 5;
    cs.scene.max_entities = 4;
    return synth::generate_corpus(cs);
  }();
  return data;
}

TrainConfig quick(std::uint64_t seed, int epochs) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.epochs = epochs;
  cfg.batch_size = 16;
  cfg.lr = 2e-3;
  cfg.val_fraction = 0.25;
  return cfg;
}

std::map<std::string, nn::Tensor<float>> params_only(const nn::ParamStore& s) {
  std::map<std::string, nn::Tensor<float>> out;
  for (const auto& [k, v] : s.entries) {
    if (k.rfind("param.", 0) == 0) out.emplace(k, v);
  }
  return out;
}

Dataset names(int n) {
  Dataset d(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) d[i].name = "s" + std::to_string(i);
  return d;
}

}  // namespace

TEST(Split, Examples) {
  const Dataset d = names(10);
  const auto [tr, va] = split_dataset(d, 0.2, 5);
  EXPECT_EQ(va.size(), 2u);
  EXPECT_EQ(tr.size(), 8u);
  std::set<std::string> all;
  for (const auto& s : tr) all.insert(s.name);
  for (const auto& s : va) EXPECT_TRUE(all.insert(s.name).second);
  EXPECT_EQ(all.size(), 10u);
  const auto again = split_dataset(d, 0.2, 5);
  for (std::size_t i = 0; i < va.size(); ++i) EXPECT_EQ(again.second[i].name, va[i].name);
  EXPECT_EQ(code_of([] { split_dataset(names(1), 0.2, 0); }), ErrorCode::TooFewScenes);
  // both sides stay non-empty
  EXPECT_EQ(split_dataset(names(2), 0.01, 0).second.size(), 1u);
  EXPECT_EQ(split_dataset(names(2), 0.99, 0).first.size(), 1u);
}

TEST(Stage1Data, NegativeSubsampling) {
  SceneSequence seq;
  Frame f;
  f.frame_id = 0;
  f.width = 640;
  f.height = 480;
  for (int t = 1; t <= 5; ++t) f.persons.push_back({t, {60.0 * t, 100, 30, 80}, false, 0});
  seq.frames.push_back(f);
  seq.labels[0] = {{1, 2, IC::StandingTogether}};
  nn::Rng rng(1);
  auto s = build_stage1_dataset(seq, 3.0, rng);
  ASSERT_EQ(s.size(), 4u);
  EXPECT_EQ(std::count_if(s.begin(), s.end(), [](const auto& x) { return x.positive; }), 1);
  s = build_stage1_dataset(seq, 1000.0, rng);
  EXPECT_EQ(s.size(), 10u);
  for (const auto& x : s) EXPECT_EQ(x.g.g, stage1_geometry(f.find(x.a)->bbox, f.find(x.b)->bbox, {640, 480}).g);
  seq.labels.clear();
  EXPECT_EQ(code_of([&] { build_stage1_dataset(seq, 3.0, rng); }), ErrorCode::NoPositives);
}

TEST(Stage2Data, FlipFeaturesMatchOriginal) {
  PreprocessConfig prep;
  const SceneSequence seq = sample_frames(filter_sequence(corpus()[0], prep.filter), prep.interval);
  const auto plain = build_stage2_dataset(seq, prep, false);
  const auto flipped = build_stage2_dataset(seq, prep, true);
  ASSERT_EQ(plain.size(), flipped.size());
  ASSERT_FALSE(plain.empty());
  for (std::size_t i = 0; i < plain.size(); ++i) {
    EXPECT_EQ(plain[i].f.f, flipped[i].f.f);
    EXPECT_EQ(plain[i].f.f, plain[i].f_flip.f);
    for (std::size_t k = 0; k < kStage2Dims; ++k) {
      EXPECT_NEAR(flipped[i].f_flip.f[k], flipped[i].f.f[k], 1e-6 * (1 + std::abs(flipped[i].f.f[k])));
    }
    EXPECT_EQ(plain[i].label, static_cast<int>(*seq.label_of(plain[i].frame_id, plain[i].a, plain[i].b)));
  }
}

TEST(ClassWeights, SpecCounts) {
  std::vector<int> labels;
  labels.insert(labels.end(), 100, 0);
  labels.insert(labels.end(), 50, 1);
  labels.insert(labels.end(), 25, 2);
  const auto w = nn::inverse_frequency_weights(labels, 3);
  EXPECT_NEAR(w[0], 3.0 / 7, 1e-12);
  EXPECT_NEAR(w[1], 6.0 / 7, 1e-12);
  EXPECT_NEAR(w[2], 12.0 / 7, 1e-12);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.flip_prob = 1.5;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::InvalidParams);
  c = {};
  c.neg_pos_ratio = 0;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::InvalidParams);
  c = {};
  c.theta = 2;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::InvalidThreshold);
  EXPECT_EQ(parse_pair_source("stage1_proposals"), PairSource::Stage1Proposals);
  EXPECT_EQ(parse_pair_source("gt"), PairSource::GroundTruth);
}

TEST(TrainStage1, DeterministicAndLearns) {
  const auto a = train_stage1(corpus(), quick(3, 12));
  const auto b = train_stage1(corpus(), quick(3, 12));
  EXPECT_EQ(nn::encode_checkpoint(a.model->to_store()), nn::encode_checkpoint(b.model->to_store()));
  ASSERT_EQ(a.report.epochs.size(), 12u);
  for (std::size_t e = 0; e < 12; ++e) EXPECT_EQ(a.report.epochs[e].loss, b.report.epochs[e].loss);
  // non-increasing up to 5% transient bumps
  for (std::size_t e = 1; e < 12; ++e) EXPECT_LE(a.report.epochs[e].loss, 1.05 * a.report.epochs[e - 1].loss);
  EXPECT_LT(a.report.epochs.back().loss, a.report.epochs.front().loss);
  ASSERT_TRUE(a.report.best_detection.has_value());
  EXPECT_GE(a.report.best_detection->recall, 0.9);
  const auto c = train_stage1(corpus(), quick(4, 12));
  EXPECT_NE(nn::encode_checkpoint(a.model->to_store()), nn::encode_checkpoint(c.model->to_store()));
}

TEST(TrainStage1, ZeroLearningRateKeepsParameters) {
  TrainConfig cfg = quick(5, 1);
  cfg.lr = 0;
  cfg.weight_decay = 0;
  const auto one = train_stage1(corpus(), cfg);
  cfg.epochs = 4;
  const auto four = train_stage1(corpus(), cfg);
  EXPECT_EQ(params_only(one.model->to_store()), params_only(four.model->to_store()));
  for (float v : four.model->reweight().scale.data) EXPECT_EQ(v, 1.0f);
}

TEST(TrainStage2, DeterministicAndFlipConsistent) {
  TrainConfig cfg = quick(6, 8);
  cfg.flip_prob = 0;
  const Stage2Config arch{Stage2Variant::NoAppearance, FeatureSubset::All, 0, 0.1};
  const auto a = train_stage2(corpus(), arch, cfg);
  const auto b = train_stage2(corpus(), arch, cfg);
  EXPECT_EQ(nn::encode_checkpoint(a.model->to_store()), nn::encode_checkpoint(b.model->to_store()));
  ASSERT_TRUE(a.report.best_val.has_value());
  cfg.flip_prob = 1;
  const auto f = train_stage2(corpus(), arch, cfg);
  ASSERT_TRUE(f.report.best_val.has_value());
  EXPECT_NEAR(f.report.best_val->accuracy, a.report.best_val->accuracy, 0.02);
  EXPECT_NEAR(f.report.best_val->macro_f1, a.report.best_val->macro_f1, 0.02);
}

TEST(TrainStage2, FullVariantNeedsEmbeddings) {
  const Stage2Config arch{Stage2Variant::Full, FeatureSubset::All, 8, 0.1};
  EXPECT_EQ(code_of([&] { train_stage2(corpus(), arch, quick(7, 1)); }), ErrorCode::MissingEmbedding);
}

TEST(TrainStage2, FromStage1Proposals) {
  auto s1 = train_stage1(corpus(), quick(8, 6));
  TrainConfig cfg = quick(8, 2);
  cfg.stage2_pair_source = PairSource::Stage1Proposals;
  const auto r = train_stage2(corpus(), {Stage2Variant::NoAppearance, FeatureSubset::All, 0, 0.1}, cfg, nullptr,
                              s1.model.get());
  EXPECT_GT(r.report.train_samples, 0u);
  EXPECT_EQ(code_of([&] {
              train_stage2(corpus(), {Stage2Variant::NoAppearance, FeatureSubset::All, 0, 0.1}, cfg);
            }),
            ErrorCode::InvalidParams);
}
