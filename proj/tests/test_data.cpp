#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "pairint/data.hpp"
#include "pairint/error.hpp"
#include "pairint/nn/tensor.hpp"
#include "test_util.hpp"

using namespace pairint;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::Io;
}

const char* kTwoPersons =
    R"({"frame_id": 0, "image": "a.png", "width": 640, "height": 480, "persons": [{"id": 1, "bbox": [100, 100, 20, 50], "occluded": false}, {"id": 2, "bbox": [130, 100, 20, 50], "occluded": false}], "interactions": [{"a": 2, "b": 1, "label": "walking_together"}]})";

Frame make_frame(std::initializer_list<std::pair<int, BBox>> persons, int w = 640, int h = 480) {
  Frame f;
  f.width = w;
  f.height = h;
  for (const auto& [id, box] : persons) f.persons.push_back({id, box, false, 0});
  return f;
}

}  // namespace

TEST(Annotations, EmptyFileGivesNoFrames) {
  const auto seq = parse_annotations("");
  EXPECT_TRUE(seq.frames.empty());
  EXPECT_TRUE(seq.labels.empty());
}

TEST(Annotations, MinimalRecord) {
  const auto seq = parse_annotations(kTwoPersons);
  ASSERT_EQ(seq.frames.size(), 1u);
  EXPECT_EQ(seq.frames[0].persons.size(), 2u);
  ASSERT_EQ(seq.labels.at(0).size(), 1u);
  const PairLabel& l = seq.labels.at(0)[0];
  EXPECT_EQ(l.a, 1);  // canonical order
  EXPECT_EQ(l.b, 2);
  EXPECT_EQ(l.label, InteractionClass::WalkingTogether);
  EXPECT_EQ(seq.label_of(0, 2, 1), InteractionClass::WalkingTogether);
}

TEST(Annotations, DanglingTrack) {
  const std::string rec =
      R"({"frame_id": 0, "width": 64, "height": 64, "persons": [{"id": 1, "bbox": [1, 1, 5, 5]}], "interactions": [{"a": 1, "b": 99, "label": "walking_together"}]})";
  EXPECT_EQ(code_of([&] { parse_annotations(rec); }), ErrorCode::DanglingTrackId);
}

TEST(Annotations, UnknownLabel) {
  const std::string rec =
      R"({"frame_id": 0, "width": 64, "height": 64, "persons": [{"id": 1, "bbox": [1, 1, 5, 5]}, {"id": 2, "bbox": [10, 1, 5, 5]}], "interactions": [{"a": 1, "b": 2, "label": "dancing"}]})";
  EXPECT_EQ(code_of([&] { parse_annotations(rec); }), ErrorCode::UnknownLabel);
}

TEST(Annotations, MalformedReportsLine) {
  const std::string text = std::string(kTwoPersons) + "\n{not json}\n";
  try {
    parse_annotations(text, "x.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedRecord);
    EXPECT_NE(std::string(e.what()).find("x.jsonl:2"), std::string::npos);
  }
  EXPECT_EQ(code_of([] { parse_annotations(R"({"frame_id": 0, "width": 10})"); }), ErrorCode::MalformedRecord);
  EXPECT_EQ(code_of([] {
              parse_annotations(R"({"frame_id": 0, "width": 10, "height": 10, "persons": [{"id": 1, "bbox": [1, 1, 0, 5]}]})");
            }),
            ErrorCode::MalformedRecord);
}

TEST(Annotations, FrameIdsMustIncrease) {
  const std::string text = R"({"frame_id": 3, "width": 10, "height": 10})"
                           "\n"
                           R"({"frame_id": 3, "width": 10, "height": 10})";
  EXPECT_EQ(code_of([&] { parse_annotations(text); }), ErrorCode::MalformedRecord);
}

TEST(Annotations, RoundTrip) {
  nn::Rng rng(5);
  SceneSequence seq;
  seq.fps = 12.5;
  for (int f = 0; f < 20; ++f) {
    Frame fr;
    fr.frame_id = 3 * f + 1;
    fr.width = 320;
    fr.height = 240;
    fr.image = "frames/" + std::to_string(f) + ".png";
    const int n = static_cast<int>(nn::uniform_index(rng, 6));
    for (int p = 0; p < n; ++p) {
      PersonObs o;
      o.track_id = p * 7 + 2;
      o.frame_id = fr.frame_id;
      o.bbox = {std::round(nn::uniform(rng, 0, 200) * 8) / 8, std::round(nn::uniform(rng, 0, 100) * 8) / 8, 16.25, 40.5};
      if (p % 3) o.occluded = p % 2 == 0;
      fr.persons.push_back(o);
    }
    std::vector<PairLabel> labels;
    for (int p = 1; p < n; p += 2) {
      PairLabel l{fr.persons[p - 1].track_id, fr.persons[p].track_id, std::nullopt};
      if (p % 4 == 1) l.label = static_cast<InteractionClass>(nn::uniform_index(rng, 3));
      labels.push_back(l);
    }
    if (!labels.empty()) seq.labels[fr.frame_id] = labels;
    seq.frames.push_back(fr);
  }
  const auto back = parse_annotations(format_annotations(seq));
  EXPECT_EQ(back.fps, seq.fps);
  ASSERT_EQ(back.frames.size(), seq.frames.size());
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    EXPECT_EQ(back.frames[i].frame_id, seq.frames[i].frame_id);
    EXPECT_EQ(back.frames[i].image, seq.frames[i].image);
    EXPECT_EQ(back.frames[i].persons, seq.frames[i].persons);
  }
  EXPECT_EQ(back.labels, seq.labels);

  const auto dir = testutil::temp_dir("roundtrip");
  save_annotations(seq, dir / "a.jsonl");
  const auto loaded = load_annotations(dir / "a.jsonl");
  EXPECT_EQ(loaded.labels, seq.labels);
  EXPECT_EQ(loaded.frames.size(), seq.frames.size());
}

TEST(Filter, BorderMargin) {
  Frame f = make_frame({{1, {0, 100, 20, 50}}, {2, {100, 100, 20, 50}}});
  const Frame out = filter_observations(f, 5.0, true);
  ASSERT_EQ(out.persons.size(), 1u);
  EXPECT_EQ(out.persons[0].track_id, 2);
}

TEST(Filter, IdentityAtZeroMargin) {
  Frame f = make_frame({{1, {0, 0, 20, 50}}, {2, {100, 100, 20, 50}}, {3, {620, 430, 20, 50}}});
  f.persons[1].occluded = true;
  const Frame out = filter_observations(f, 0.0, false);
  EXPECT_EQ(out.persons, f.persons);
}

TEST(Filter, DropsOccluded) {
  Frame f = make_frame({{1, {50, 50, 20, 50}}, {2, {100, 100, 20, 50}}, {3, {200, 100, 20, 50}}});
  f.persons[1].occluded = true;
  EXPECT_EQ(filter_observations(f, 5.0, true).persons.size(), 2u);
  EXPECT_EQ(filter_observations(f, 5.0, false).persons.size(), 3u);
}

TEST(Filter, OverlapHeuristicWithoutFlag) {
  Frame f = make_frame({{1, {100, 100, 20, 50}}, {2, {101, 102, 20, 50}}, {3, {300, 100, 20, 50}}});
  for (auto& p : f.persons) p.occluded.reset();
  // person 2 has the larger bottom edge, so person 1 is the occluded one
  const Frame out = filter_observations(f, 5.0, true);
  std::set<int> ids;
  for (const auto& p : out.persons) ids.insert(p.track_id);
  EXPECT_EQ(ids, (std::set<int>{2, 3}));
}

TEST(Sampling, Intervals) {
  SceneSequence seq;
  for (int i = 0; i < 10; ++i) {
    Frame f;
    f.frame_id = i;
    f.width = f.height = 10;
    seq.frames.push_back(f);
    seq.labels[i] = {};
  }
  const auto s5 = sample_frames(seq, 5);
  ASSERT_EQ(s5.frames.size(), 2u);
  EXPECT_EQ(s5.frames[0].frame_id, 0);
  EXPECT_EQ(s5.frames[1].frame_id, 5);
  EXPECT_EQ(s5.labels.size(), 2u);
  EXPECT_EQ(sample_frames(seq, 1).frames.size(), 10u);

  SceneSequence one;
  one.frames.push_back(seq.frames[0]);
  EXPECT_EQ(sample_frames(one, 100).frames.size(), 1u);
  EXPECT_EQ(code_of([&] { sample_frames(seq, 0); }), ErrorCode::InvalidInterval);
}

TEST(Pairs, Enumeration) {
  EXPECT_TRUE(enumerate_pairs(make_frame({})).empty());
  EXPECT_TRUE(enumerate_pairs(make_frame({{1, {1, 1, 5, 5}}})).empty());
  const auto three = enumerate_pairs(make_frame({{3, {1, 1, 5, 5}}, {1, {9, 1, 5, 5}}, {2, {20, 1, 5, 5}}}));
  ASSERT_EQ(three.size(), 3u);
  const std::vector<std::pair<int, int>> want{{1, 2}, {1, 3}, {2, 3}};
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(three[i].first.track_id, want[i].first);
    EXPECT_EQ(three[i].second.track_id, want[i].second);
  }
}

TEST(Pairs, CountAndFilterCommute) {
  nn::Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    Frame f = make_frame({});
    const int n = static_cast<int>(nn::uniform_index(rng, 10));
    for (int p = 0; p < n; ++p) {
      f.persons.push_back({p + 1,
                           {nn::uniform(rng, 0, 600), nn::uniform(rng, 0, 400), nn::uniform(rng, 10, 40), 60},
                           nn::uniform01(rng) < 0.2,
                           0});
      auto& b = f.persons.back().bbox;
      b.w = std::min(b.w, 640 - b.x);
      b.h = std::min(b.h, 480 - b.y);
    }
    const auto all = enumerate_pairs(f);
    ASSERT_EQ(all.size(), static_cast<std::size_t>(n * (n - 1) / 2));
    const Frame kept = filter_observations(f, 5.0, true);
    std::set<int> ids;
    for (const auto& p : kept.persons) ids.insert(p.track_id);
    std::vector<std::pair<int, int>> a, b;
    for (const auto& [x, y] : enumerate_pairs(kept)) a.emplace_back(x.track_id, y.track_id);
    for (const auto& [x, y] : all) {
      if (ids.count(x.track_id) && ids.count(y.track_id)) b.emplace_back(x.track_id, y.track_id);
    }
    EXPECT_EQ(a, b);
  }
}

TEST(Dataset, LoadsDirectoryAndNamesScenes) {
  const auto dir = testutil::temp_dir("dataset");
  std::filesystem::create_directories(dir / "s1");
  std::filesystem::create_directories(dir / "s2");
  {
    std::ofstream(dir / "s1" / "annotations.jsonl") << kTwoPersons << "\n";
    std::ofstream(dir / "s2" / "annotations.jsonl") << kTwoPersons << "\n";
  }
  const Dataset d = load_dataset(dir);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d[0].name, "s1");
  EXPECT_EQ(d[1].name, "s2");
  EXPECT_EQ(code_of([&] { load_dataset(dir / "missing"); }), ErrorCode::Io);
}

TEST(Dataset, MissingImage) {
  const auto seq = parse_annotations(kTwoPersons);
  EXPECT_EQ(code_of([&] { load_frame_image(seq, seq.frames[0]); }), ErrorCode::MissingFrameImage);
}
