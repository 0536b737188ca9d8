#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>

#include "pairint/error.hpp"
#include "pairint/features.hpp"
#include "pairint/nn/tensor.hpp"
#include "pairint/oracle.hpp"

using namespace pairint;

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

BBox random_box(nn::Rng& rng, int w, int h) {
  const double bw = nn::uniform(rng, 8, w / 3.0), bh = nn::uniform(rng, 8, h / 2.0);
  return {nn::uniform(rng, 0, w - bw), nn::uniform(rng, 0, h - bh), bw, bh};
}

FlowField random_flow(nn::Rng& rng, int w, int h) {
  FlowField f(w, h);
  // smooth-ish field plus noise so that every statistic is exercised
  const double ax = nn::uniform(rng, -2, 2), ay = nn::uniform(rng, -2, 2);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto i = f.index(x, y);
      f.fx[i] = static_cast<float>(ax * std::sin(x * 0.05) + nn::uniform(rng, -0.5, 0.5));
      f.fy[i] = static_cast<float>(ay * std::cos(y * 0.07) + nn::uniform(rng, -0.5, 0.5));
    }
  }
  return f;
}

}  // namespace

TEST(Stage1Geometry, IdenticalBoxes) {
  const BBox a{10, 20, 30, 60};
  const auto g = stage1_geometry(a, a, {200, 200}).g;
  EXPECT_EQ(g, (std::array<double, 7>{0, 0, 1, 0, 0, 0, 0}));
}

TEST(Stage1Geometry, SideBySide) {
  const auto g = stage1_geometry({50, 0, 50, 100}, {150, 0, 50, 100}, {640, 480}).g;
  EXPECT_DOUBLE_EQ(g[0], 1.0);
  EXPECT_DOUBLE_EQ(g[1], 2.0);
  for (int i = 2; i < 7; ++i) EXPECT_DOUBLE_EQ(g[i], 0.0);
}

TEST(Stage1Geometry, DegenerateBox) {
  EXPECT_EQ(code_of([] { stage1_geometry({0, 0, 0, 10}, {0, 0, 5, 5}, {10, 10}); }), ErrorCode::DegenerateBox);
  EXPECT_EQ(code_of([] { stage2_geometry({0, 0, 5, 5}, {0, 0, 5, -1}, {10, 10}); }), ErrorCode::DegenerateBox);
}

TEST(Stage1Geometry, TranslationAndScaleInvariance) {
  nn::Rng rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const BBox a = random_box(rng, 640, 480), b = random_box(rng, 640, 480);
    const auto g = stage1_geometry(a, b, {640, 480}).g;
    for (double v : g) EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(g[2], 0);
    EXPECT_LE(g[2], 1);
    EXPECT_LE(g[3], 1);
    EXPECT_LE(g[4], 1);
    const double tx = nn::uniform(rng, -100, 100), ty = nn::uniform(rng, -100, 100);
    const auto gt = stage1_geometry({a.x + tx, a.y + ty, a.w, a.h}, {b.x + tx, b.y + ty, b.w, b.h}, {640, 480}).g;
    for (int i = 0; i < 7; ++i) EXPECT_NEAR(gt[i], g[i], 1e-9 * (1 + std::abs(g[i])));
    const double s = nn::uniform(rng, 0.3, 3);
    const auto gs =
        stage1_geometry({a.x * s, a.y * s, a.w * s, a.h * s}, {b.x * s, b.y * s, b.w * s, b.h * s}, {640, 480}).g;
    for (int i = 0; i < 5; ++i) EXPECT_NEAR(gs[i], g[i], 1e-9 * (1 + std::abs(g[i])));
  }
}

TEST(Stage2Geometry, Examples) {
  const auto f = stage2_geometry({0, 0, 50, 100}, {100, 0, 40, 80}, {640, 480});
  EXPECT_DOUBLE_EQ(f[2], 2.0);
  const auto g = stage2_geometry({0, 0, 40, 100}, {60, 0, 40, 100}, {320, 200});
  EXPECT_DOUBLE_EQ(g[3], 0.5);
  EXPECT_DOUBLE_EQ(g[4], 0.5);
  const auto c = stage2_geometry({10, 10, 20, 40}, {5, 0, 30, 60}, {100, 100});
  EXPECT_DOUBLE_EQ(c[0], 0.0);
  EXPECT_DOUBLE_EQ(c[1], 0.0);
}

TEST(Stage2Motion, ZeroFlow) {
  const auto m = stage2_motion({10, 10, 20, 30}, {40, 10, 20, 30}, FlowField(100, 80));
  EXPECT_EQ(m[0], 0);
  EXPECT_EQ(m[1], 0);
  EXPECT_EQ(m[2], 0);
  EXPECT_EQ(m[3], 1);
}

TEST(Stage2Motion, UniformRightward) {
  // a = (50*100 + 50*100)/2 = 5000
  const auto m = stage2_motion({10, 10, 50, 100}, {80, 10, 50, 100}, FlowField(200, 150, 1, 0));
  EXPECT_DOUBLE_EQ(m[0], 1.0 / 5000);
  EXPECT_NEAR(m[1], 0, 1e-15);
  EXPECT_EQ(m[2], 0);
  EXPECT_NEAR(m[3], 1, 1e-12);
}

TEST(Stage2Motion, VerticalFlowIsClamped) {
  const auto m = stage2_motion({10, 10, 20, 30}, {40, 10, 20, 30}, FlowField(100, 80, 0, 2));
  EXPECT_EQ(m[2], kRatioMax);
}

TEST(Stage2Motion, EmptyMask) {
  // both boxes inside the excluded border ring
  EXPECT_EQ(code_of([] { stage2_motion({0, 0, 1.5, 1.5}, {0, 0, 1, 2}, FlowField(50, 50)); }), ErrorCode::EmptyMask);
}

TEST(Synchrony, Examples) {
  const PerPersonMotion p{1.5, 0.3, 2.0, 0.4, 2.5};
  EXPECT_DOUBLE_EQ(synchrony(p, p), 1.0);
  PerPersonMotion a = p, b = p;
  a.mean_angle = 0;
  b.mean_angle = std::numbers::pi;
  EXPECT_NEAR(synchrony(a, b), 0.75, 1e-12);
  const PerPersonMotion z{0, 0, 0, 0, 1};
  EXPECT_DOUBLE_EQ(synchrony(z, z), 1.0);
}

TEST(Synchrony, BoundedOnRandomRecords) {
  nn::Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    auto r = [&] {
      return PerPersonMotion{nn::uniform(rng, 0, 5), nn::uniform(rng, 0, 3), nn::uniform(rng, 0, 50),
                             nn::uniform(rng, -4, 4), nn::uniform(rng, 0.2, 5)};
    };
    const double v = synchrony(r(), r());
    EXPECT_GE(v, 0);
    EXPECT_LE(v, 1);
  }
}

TEST(Symmetrize, Examples) {
  const std::vector<double> v{1, 2, 3};
  EXPECT_EQ(symmetrize(v, v), v);
  EXPECT_EQ(symmetrize(std::vector<double>{0, 2}, std::vector<double>{2, 0}), (std::vector<double>{1, 1}));
  EXPECT_EQ(code_of([] { symmetrize(std::vector<double>{1}, std::vector<double>{1, 2}); }), ErrorCode::LengthMismatch);
}

TEST(Features, SwapInvarianceIsBitwise) {
  nn::Rng rng(11);
  const FlowField flow = random_flow(rng, 160, 120);
  for (int trial = 0; trial < 1000; ++trial) {
    const BBox a = random_box(rng, 160, 120), b = random_box(rng, 160, 120);
    EXPECT_EQ(stage1_geometry(a, b, {160, 120}).g, stage1_geometry(b, a, {160, 120}).g);
    EXPECT_EQ(stage2_features(a, b, flow).f, stage2_features(b, a, flow).f);
  }
}

TEST(Features, InvariantsOnRandomInputs) {
  nn::Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const FlowField flow = random_flow(rng, 120, 90);
    for (int k = 0; k < 10; ++k) {
      const auto f = stage2_features(random_box(rng, 120, 90), random_box(rng, 120, 90), flow).f;
      EXPECT_TRUE(all_finite(f));
      EXPECT_GT(f[2], 0);
      EXPECT_GE(f[8], 0);
      EXPECT_LE(f[8], 1 + 1e-9);
      EXPECT_GE(f[9], 0);
      EXPECT_LE(f[9], 1);
    }
  }
}

TEST(Features, MatchOracle) {
  nn::Rng rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    const FlowField flow = random_flow(rng, 140, 100);
    for (int k = 0; k < 10; ++k) {
      const BBox a = random_box(rng, 140, 100), b = random_box(rng, 140, 100);
      const auto f = stage2_features(a, b, flow).f;
      const auto o = oracle::oracle_features(a, b, flow, 140, 100, MaskPolicy{}.ring);
      for (int i = 0; i < 10; ++i) EXPECT_NEAR(f[i], o[i], 1e-9 * (1 + std::abs(o[i]))) << "f" << i + 1;
    }
  }
}

TEST(Features, MirrorInvariance) {
  nn::Rng rng(19);
  for (int trial = 0; trial < 40; ++trial) {
    const FlowField flow = random_flow(rng, 150, 110);
    for (int k = 0; k < 10; ++k) {
      const std::vector<BBox> boxes{random_box(rng, 150, 110), random_box(rng, 150, 110)};
      const auto [fb, ff] = horizontal_flip(boxes, &flow, 150);
      ASSERT_TRUE(ff.has_value());
      const auto f = stage2_features(boxes[0], boxes[1], flow).f;
      const auto g = stage2_features(fb[0], fb[1], *ff).f;
      for (int i = 0; i < 10; ++i) EXPECT_NEAR(f[i], g[i], 1e-6 * (1 + std::abs(f[i]))) << "f" << i + 1;
      const auto s1 = stage1_geometry(boxes[0], boxes[1], {150, 110}).g;
      const auto s2 = stage1_geometry(fb[0], fb[1], {150, 110}).g;
      for (int i = 0; i < 7; ++i) EXPECT_NEAR(s1[i], s2[i], 1e-9);
    }
  }
}

TEST(Flip, Examples) {
  EXPECT_DOUBLE_EQ(flip_box({10, 5, 30, 40}, 100).x, 60);
  nn::Rng rng(23);
  std::vector<BBox> boxes;
  for (int i = 0; i < 20; ++i) boxes.push_back(random_box(rng, 200, 100));
  const auto once = horizontal_flip(boxes, 200);
  const auto twice = horizontal_flip(once, 200);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    EXPECT_NEAR(twice[i].x, boxes[i].x, 1e-12);
    EXPECT_EQ(twice[i].y, boxes[i].y);
  }
  const FlowField right(8, 4, 1, 0);
  const auto [fb, ff] = horizontal_flip(boxes, &right, 8);
  EXPECT_EQ(ff->fx[0], -1);
  EXPECT_EQ(ff->fy[0], 0);
  EXPECT_FALSE(horizontal_flip(boxes, nullptr, 200).second.has_value());
}

TEST(Standardize, Examples) {
  FeatureStats s{{1}, {0.5}};
  EXPECT_EQ(standardize(std::vector<double>{2}, s), (std::vector<double>{2.0}));
  FeatureStats id{{0, 0}, {1, 1}};
  EXPECT_EQ(standardize(std::vector<double>{3, -4}, id), (std::vector<double>{3, -4}));
  FeatureStats m{{3, -4}, {2, 7}};
  EXPECT_EQ(standardize(std::vector<double>{3, -4}, m), (std::vector<double>{0, 0}));
  FeatureStats flat{{5}, {0}};
  EXPECT_EQ(standardize(std::vector<double>{7}, flat), (std::vector<double>{2}));
  EXPECT_EQ(code_of([&] { standardize(std::vector<double>{1, 2}, s); }), ErrorCode::StatsDimensionMismatch);
}

TEST(Standardize, StatsArePopulation) {
  const std::vector<std::vector<double>> rows{{1, 10}, {3, 10}};
  const FeatureStats s = compute_feature_stats(rows);
  EXPECT_EQ(s.mean, (std::vector<double>{2, 10}));
  EXPECT_DOUBLE_EQ(s.std[0], 1.0);
  EXPECT_DOUBLE_EQ(s.std[1], 0.0);
  EXPECT_EQ(code_of([] { compute_feature_stats({}); }), ErrorCode::EmptyDataset);
  const std::vector<std::vector<double>> ragged{{1}, {1, 2}};
  EXPECT_EQ(code_of([&] { compute_feature_stats(ragged); }), ErrorCode::StatsDimensionMismatch);
}

TEST(FeatureCsv, Format) {
  const std::vector<FeatureRow> rows{{3, 1, 2, {0.5, 1.25}, InteractionClass::SittingTogether}, {3, 1, 4, {2, 3}, std::nullopt}};
  std::ostringstream out;
  write_feature_csv(out, rows, "g");
  EXPECT_EQ(out.str(), "frame_id,a,b,g1,g2,label\n3,1,2,0.5,1.25,sitting_together\n3,1,4,2,3,\n");
}
