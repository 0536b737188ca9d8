#include <benchmark/benchmark.h>

#include "pairint/features.hpp"
#include "pairint/flow.hpp"
#include "pairint/stage1.hpp"
#include "pairint/stage2.hpp"
#include "test_util.hpp"

using namespace pairint;

namespace {

void BM_FlowVGA(benchmark::State& state) {
  const testutil::Texture tex(3);
  const GrayImage prev = testutil::textured(640, 480, tex);
  const GrayImage next = testutil::textured(640, 480, tex, 2, 1);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_flow(prev, next));
}
BENCHMARK(BM_FlowVGA)->Unit(benchmark::kMillisecond);

void BM_PolyExpansion(benchmark::State& state) {
  const GrayImage img = testutil::textured(320, 240, testutil::Texture(4));
  for (auto _ : state) benchmark::DoNotOptimize(polynomial_expansion(img, 5, 1.1));
}
BENCHMARK(BM_PolyExpansion)->Unit(benchmark::kMillisecond);

void BM_Stage2Features(benchmark::State& state) {
  nn::Rng rng(5);
  FlowField flow(640, 480);
  for (auto& v : flow.fx) v = static_cast<float>(nn::uniform(rng, -2, 2));
  for (auto& v : flow.fy) v = static_cast<float>(nn::uniform(rng, -2, 2));
  const BBox a{100, 120, 60, 160}, b{190, 110, 70, 170};
  for (auto _ : state) benchmark::DoNotOptimize(stage2_features(a, b, flow));
}
BENCHMARK(BM_Stage2Features);

void BM_Stage1Score(benchmark::State& state) {
  nn::Rng rng(6);
  Stage1Model model;
  model.init(rng);
  std::vector<Stage1Features> g(static_cast<std::size_t>(state.range(0)));
  for (auto& x : g) {
    for (auto& v : x.g) v = nn::uniform(rng, -1, 1);
  }
  for (auto _ : state) benchmark::DoNotOptimize(score_pairs(model, g));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Stage1Score)->Arg(1)->Arg(15)->Arg(28);

void BM_Stage2Classify(benchmark::State& state) {
  nn::Rng rng(7);
  Stage2Model model({Stage2Variant::NoAppearance, FeatureSubset::All, 0, 0.1});
  model.init(rng);
  std::vector<PairContext> pairs(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    pairs[i].a = static_cast<int>(i);
    pairs[i].b = static_cast<int>(i) + 100;
    for (auto& v : pairs[i].features.f) v = nn::uniform(rng, 0, 1);
  }
  for (auto _ : state) benchmark::DoNotOptimize(classify_pairs(model, pairs));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Stage2Classify)->Arg(1)->Arg(6);

}  // namespace
BENCHMARK_MAIN();
