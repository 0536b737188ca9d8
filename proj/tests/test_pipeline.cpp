#include <gtest/gtest.h>

#include <nlohmann/json.hpp>
#include <set>

#include "pairint/pipeline.hpp"
#include "pairint/synth.hpp"

using namespace pairint;

namespace {

Dataset small_corpus(int scenes = 2, int frames = 6) {
  synth::CorpusSpec cs;
  cs.scenes = scenes;
  cs.seed = 31;
  cs.scene.frames = frames;
  cs.scene.width = 240;
  cs.scene.height = 180;
  cs.scene.min_persons = 3;
  cs.scene.max_persons = 4;
  cs.scene.max_entities = 3;
  return synth::generate_corpus(cs);
}

struct Models {
  Stage1Model s1;
  Stage2Model s2{{Stage2Variant::NoAppearance, FeatureSubset::All, 0, 0.1}};
  Models() {
    nn::Rng rng(2);
    s1.init(rng);
    s2.init(rng);
  }
};

}  // namespace

TEST(FlowProvider, MatchesDirectEstimate) {
  const Dataset d = small_corpus(1, 4);
  const auto& seq = d[0];
  const FarnebackParams p;
  FlowProvider fp(seq, p);
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t a = i + 1 < 4 ? i : i - 1;
    const FlowField want = estimate_flow(load_frame_image(seq, seq.frames[a]), load_frame_image(seq, seq.frames[a + 1]), p);
    const FlowField got = fp.flow_at(i);
    EXPECT_EQ(got.fx, want.fx) << i;
    EXPECT_EQ(got.fy, want.fy) << i;
  }
  EXPECT_EQ(fp.pyramids_built(), 4u);

  SceneSequence single;
  single.frames.push_back(seq.frames[0]);
  FlowProvider one(single, p);
  const FlowField z = one.flow_at(0);
  EXPECT_EQ(z.width, 240);
  for (float v : z.fx) EXPECT_EQ(v, 0.0f);
}

TEST(FramePairs, FeaturesAgree) {
  const Dataset d = small_corpus(1, 3);
  const Frame& f = d[0].frames[1];
  const FramePairs fp = frame_pairs(f);
  ASSERT_EQ(fp.pairs.size(), fp.g.size());
  for (std::size_t i = 0; i < fp.pairs.size(); ++i) {
    EXPECT_EQ(fp.g[i].g, stage1_geometry(fp.pairs[i].first.bbox, fp.pairs[i].second.bbox, {f.width, f.height}).g);
  }
  FlowProvider prov(d[0], {});
  const FlowField flow = prov.flow_at(1);
  std::vector<std::size_t> all(fp.pairs.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto m = motion_features(fp, all, flow, {});
  const auto mm = mirrored_motion_features(fp, all, flow, {});
  for (std::size_t i = 0; i < all.size(); ++i) {
    EXPECT_EQ(m[i].f, stage2_features(fp.pairs[i].first.bbox, fp.pairs[i].second.bbox, flow).f);
    for (std::size_t k = 0; k < kStage2Dims; ++k) EXPECT_NEAR(mm[i].f[k], m[i].f[k], 1e-6 * (1 + std::abs(m[i].f[k])));
  }
}

TEST(Inference, ThetaOneProposesNothing) {
  const Dataset d = small_corpus();
  Models m;
  InferConfig cfg;
  cfg.theta = 1.0;
  std::size_t frames = 0;
  const auto stats = run_inference(d, m.s1, m.s2, nullptr, cfg, [&](const FrameResult& r) {
    ++frames;
    EXPECT_TRUE(r.proposals.empty());
    EXPECT_TRUE(r.classified.empty());
    for (const auto& g : r.groups) EXPECT_EQ(g.size(), 1u);
  });
  EXPECT_EQ(frames, 12u);
  EXPECT_EQ(stats.frames, 12u);
  EXPECT_EQ(stats.proposals, 0u);
}

TEST(Inference, ThetaZeroClassifiesEveryPair) {
  const Dataset d = small_corpus();
  Models m;
  InferConfig cfg;
  cfg.theta = 0.0;
  cfg.prep.interval = 2;
  std::size_t pairs = 0, frames = 0;
  const auto stats = run_inference(d, m.s1, m.s2, nullptr, cfg, [&](const FrameResult& r) {
    ++frames;
    const auto& seq = d[r.scene];
    const Frame* f = nullptr;
    for (const auto& x : seq.frames) {
      if (x.frame_id == r.frame_id) f = &x;
    }
    ASSERT_NE(f, nullptr);
    const Frame filtered = filter_observations(*f, cfg.prep.filter.border_margin, cfg.prep.filter.drop_occluded);
    const std::size_t n = filtered.persons.size();
    EXPECT_EQ(r.proposals.size(), n * (n - 1) / 2);
    EXPECT_EQ(r.classified.size(), r.proposals.size());
    pairs += r.classified.size();
    if (n > 1) {
      EXPECT_EQ(r.groups.size(), 1u);  // every pair is an edge
    }
  });
  EXPECT_EQ(frames, 6u);
  EXPECT_EQ(stats.pairs, pairs);
}

TEST(Inference, EmptyFramesCostNothing) {
  Dataset d = small_corpus(1, 3);
  for (auto& f : d[0].frames) f.persons.clear();
  d[0].labels.clear();
  Models m;
  InferConfig cfg;
  const auto r = efficiency_report(d, m.s1, m.s2, nullptr, cfg);
  EXPECT_EQ(r.frames, 3u);
  EXPECT_EQ(r.mean_persons, 0.0);
  EXPECT_GT(r.flow_flops_per_frame, 0u);
  EXPECT_EQ(r.per_pair_flops, r.stage1_flops + r.stage2_flops);
  EXPECT_LT(r.per_pair_flops, 2'000'000u);
  const auto j = nlohmann::json::parse(efficiency_json(r));
  EXPECT_TRUE(j.contains("fps"));
}

TEST(Inference, GroupsJsonLine) {
  const auto j = nlohmann::json::parse(groups_json_line(9, {{1, 2}, {3}}, "sc"));
  EXPECT_EQ(j["frame_id"], 9);
  EXPECT_EQ(j["groups"].size(), 2u);
  EXPECT_EQ(j["groups"][0][1], 2);
  EXPECT_EQ(j["scene"], "sc");
}
