// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

#include "gradcheck.hpp"
#include "pairint/evaluator.hpp"
#include "pairint/features.hpp"
#include "pairint/flow.hpp"
#include "pairint/nn/checkpoint.hpp"
#include "pairint/nn/optim.hpp"
#include "pairint/oracle.hpp"
#include "pairint/pipeline.hpp"
#include "pairint/stage1.hpp"
#include "pairint/stage2.hpp"
#include "pairint/synth.hpp"
#include "pairint/trainer.hpp"
#include "test_util.hpp"

using namespace pairint;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("criterion %2d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

template <class... A>
std::string fmt(const char* f, A... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

BBox random_box(nn::Rng& rng, int w, int h) {
  const double bw = nn::uniform(rng, 8, w / 3.0), bh = nn::uniform(rng, 8, h / 2.0);
  return {nn::uniform(rng, 0, w - bw), nn::uniform(rng, 0, h - bh), bw, bh};
}

FlowField random_flow(nn::Rng& rng, int w, int h) {
  FlowField f(w, h);
  const double ax = nn::uniform(rng, -3, 3), ay = nn::uniform(rng, -3, 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto i = f.index(x, y);
      f.fx[i] = static_cast<float>(ax * std::sin(x * 0.05) + nn::uniform(rng, -0.5, 0.5));
      f.fy[i] = static_cast<float>(ay * std::cos(y * 0.07) + nn::uniform(rng, -0.5, 0.5));
    }
  }
  return f;
}

// ---------------------------------------------------------------------------

void feature_oracle() {
  const auto t0 = Clock::now();
  nn::Rng rng(101);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    const FlowField flow = random_flow(rng, 200, 150);
    const BBox a = random_box(rng, 200, 150), b = random_box(rng, 200, 150);
    const auto f = stage2_features(a, b, flow).f;
    const auto o = oracle::oracle_features(a, b, flow, 200, 150, MaskPolicy{}.ring);
    for (int k = 0; k < 10; ++k) worst = std::max(worst, std::abs(f[k] - o[k]) / std::max(std::abs(o[k]), 1e-12));
  }
  const double sec = since(t0);
  report(1, worst < 1e-6 && sec < 5, fmt("max rel err %.3g over 100 pairs, %.2f s", worst, sec));
}

void symmetry() {
  nn::Rng rng(102);
  const FlowField flow = random_flow(rng, 320, 240);
  int bad = 0;
  for (int i = 0; i < 1000; ++i) {
    const BBox a = random_box(rng, 320, 240), b = random_box(rng, 320, 240);
    if (stage1_geometry(a, b, {320, 240}).g != stage1_geometry(b, a, {320, 240}).g) ++bad;
    if (stage2_features(a, b, flow).f != stage2_features(b, a, flow).f) ++bad;
  }
  report(2, bad == 0, fmt("%d bitwise mismatches over 1000 swapped pairs", bad));
}

void flow_accuracy() {
  const auto t0 = Clock::now();
  nn::Rng rng(103);
  double epe_sum = 0, worst_epe = 0;
  int confirmed = 0;
  for (int i = 0; i < 20; ++i) {
    int dx = 0, dy = 0;
    while (dx == 0 && dy == 0 || dx * dx + dy * dy > 16) {
      dx = static_cast<int>(nn::uniform_index(rng, 9)) - 4;
      dy = static_cast<int>(nn::uniform_index(rng, 9)) - 4;
    }
    const testutil::Texture tex(1000 + i);
    const GrayImage prev = testutil::textured(256, 256, tex);
    const GrayImage next = testutil::textured(256, 256, tex, dx, dy);
    const FlowField bf = oracle::brute_force_flow(prev, next, 5);
    bool ok = true;
    for (int y = 32; y < 224; y += 16) {
      for (int x = 32; x < 224; x += 16) ok = ok && bf.fx[bf.index(x, y)] == dx && bf.fy[bf.index(x, y)] == dy;
    }
    confirmed += ok;
    const FlowField f = estimate_flow(prev, next);
    double s = 0;
    for (std::size_t k = 0; k < f.fx.size(); ++k) s += std::hypot(f.fx[k] - dx, f.fy[k] - dy);
    const double epe = s / static_cast<double>(f.fx.size());
    epe_sum += epe;
    worst_epe = std::max(worst_epe, epe);
  }
  float still = 0;
  for (std::uint64_t seed : {7, 8, 9}) {
    const GrayImage img = testutil::textured(256, 256, testutil::Texture(seed));
    const FlowField f = estimate_flow(img, img);
    for (std::size_t k = 0; k < f.fx.size(); ++k) still = std::max(still, std::hypot(f.fx[k], f.fy[k]));
  }
  const double mean = epe_sum / 20, sec = since(t0);
  report(3, mean < 0.3 && confirmed == 20 && still < 0.05f && sec < 30,
         fmt("mean EPE %.4f px (worst %.4f), brute force confirmed %d/20, identical max %.4g px, %.1f s", mean,
             worst_epe, confirmed, static_cast<double>(still), sec));
}

void gradients() {
  using namespace gradcheck;
  const auto t0 = Clock::now();
  Rng rng(104);
  double worst = 0;
  int configs = 0;
  for (int trial = 0; trial < 20; ++trial, ++configs) {
    const std::size_t batch = 3 + uniform_index(rng, 6);
    const std::size_t in = 1 + uniform_index(rng, 48), out = 1 + uniform_index(rng, 48);
    Linear<double> lin(in, out);
    worst = std::max(worst, check_layer(lin, batch, rng));
    ReLU<double> relu(in);
    worst = std::max(worst, check_layer(relu, batch, rng));
    SiLU<double> silu(in);
    worst = std::max(worst, check_layer(silu, batch, rng, 3.0));
    BatchNorm1d<double> bn(in);
    for (auto& v : bn.gamma.data) v = uniform(rng, 0.5, 1.5);
    worst = std::max(worst, check_layer(bn, batch, rng));
    Dropout<double> drop(in, uniform(rng, 0.0, 0.6));
    worst = std::max(worst, check_layer(drop, batch, rng));
    FeatureReweight<double> rw(in);
    for (auto& v : rw.shift.data) v = uniform(rng, -1, 1);
    for (auto& v : rw.scale.data) v = uniform(rng, 0.5, 2);
    worst = std::max(worst, check_layer(rw, batch, rng));
    Standardize<double> st(in);
    std::vector<double> m(in), s(in);
    for (std::size_t i = 0; i < in; ++i) {
      m[i] = uniform(rng, -1, 1);
      s[i] = uniform(rng, 0.5, 2);
    }
    st.set(m, s);
    worst = std::max(worst, check_layer(st, batch, rng));
    auto body = std::make_unique<Sequential<double>>();
    body->add<Linear<double>>("fc", in, out);
    body->add<BatchNorm1d<double>>("bn", out);
    body->add<SiLU<double>>("act", out);
    Residual<double> res(std::move(body));
    worst = std::max(worst, check_layer(res, batch, rng));
  }
  for (int trial = 0; trial < 20; ++trial, ++configs) {
    Stage1Net<double> s1({8 + uniform_index(rng, 40), 4 + uniform_index(rng, 20), uniform(rng, 0, 0.4)});
    s1.init(rng);
    for (auto& v : s1.reweight().shift.data) v = uniform(rng, -0.5, 0.5);
    GradCheck gc;
    gc.params = s1.params();
    gc.per_tensor = 16;
    gc.forward = [&](const Tensor<double>& x) {
      Rng local(trial);
      return s1.forward(x, Mode::Train, local);
    };
    gc.backward = [&](const Tensor<double>& g) { return s1.backward(g); };
    worst = std::max(worst, gc.run(random_tensor(rng, 4 + uniform_index(rng, 5), kStage1Dims), rng));
  }
  const FeatureSubset subsets[] = {FeatureSubset::All, FeatureSubset::Geometry, FeatureSubset::Motion};
  for (int trial = 0; trial < 20; ++trial, ++configs) {
    const auto variant = trial % 2 ? Stage2Variant::Full : Stage2Variant::NoAppearance;
    const std::size_t app = 4 + uniform_index(rng, 16);
    Stage2Net<double> net({variant, subsets[trial % 3], app, uniform(rng, 0, 0.3)});
    net.init(rng);
    const std::size_t batch = 3 + uniform_index(rng, 3);
    const Tensor<double> va = random_tensor(rng, batch, app), vb = random_tensor(rng, batch, app);
    const bool full = variant == Stage2Variant::Full;
    GradCheck gc;
    gc.params = net.params();
    gc.per_tensor = 6;
    gc.forward = [&](const Tensor<double>& x) {
      Rng local(trial);
      return net.forward(x, full ? &va : nullptr, full ? &vb : nullptr, Mode::Train, local);
    };
    gc.backward = [&](const Tensor<double>& g) {
      net.backward(g);
      return Tensor<double>{};
    };
    worst = std::max(worst, gc.run(random_tensor(rng, batch, kStage2Dims), rng));
  }
  const double sec = since(t0);
  report(4, worst < 1e-3 && sec < 60,
         fmt("max rel err %.3g over %d configurations (layers x20, stage1 x20, stage2 x20), %.1f s", worst, configs,
             sec));
}

void loss_and_optimizer() {
  nn::Rng rng(105);
  double ce_err = 0;
  for (int trial = 0; trial < 200; ++trial) {
    nn::Tensor<double> z({6, 3});
    for (auto& v : z.data) v = nn::uniform(rng, -6, 6);
    std::vector<int> t(6);
    double ce = 0;
    for (std::size_t i = 0; i < 6; ++i) {
      t[i] = static_cast<int>(nn::uniform_index(rng, 3));
      double s = 0;
      for (std::size_t j = 0; j < 3; ++j) s += std::exp(z(i, j));
      ce += std::log(s) - z(i, static_cast<std::size_t>(t[i]));
    }
    ce_err = std::max(ce_err, std::abs(nn::focal_loss(z, t, {0.0, {1.0, 1.0, 1.0}}).loss - ce / 6));
  }
  // p0 = 1, lr = 0.1, wd = 0.1, g = 1, -0.5, 0.25, default betas and eps
  const double expect[] = {0.89000000099999999, 0.85446629736090297, 0.81187872008123729};
  const double grads[] = {1.0, -0.5, 0.25};
  nn::AdamWState<double> st;
  std::vector<double> p{1.0};
  double traj_err = 0;
  for (int k = 0; k < 3; ++k) {
    nn::adamw_step<double>(p, std::vector<double>{grads[k]}, st, 0.1, 0.1);
    traj_err = std::max(traj_err, std::abs(p[0] - expect[k]));
  }
  nn::AdamWState<double> z;
  std::vector<double> q{0.37, -1.25, 4.0};
  const auto q0 = q;
  for (int k = 0; k < 3; ++k) nn::adamw_step<double>(q, std::vector<double>{0, 0, 0}, z, 0.1, 0.0);
  report(5, ce_err < 1e-6 && traj_err < 1e-8 && q == q0,
         fmt("focal(0)-CE %.3g, AdamW trajectory err %.3g, zero step %s", ce_err, traj_err,
             q == q0 ? "no-op" : "moved"));
}

void grouping_and_metrics() {
  nn::Rng rng(106);
  int group_bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(nn::uniform_index(rng, 50));
    InteractionGraph g;
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i) g.nodes.push_back(static_cast<int>(nn::uniform_index(rng, 500)) * 50 + i);
    const double density = nn::uniform01(rng) * 4.0 / n;
    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) {
        if (nn::uniform01(rng) < density) {
          const int u = g.nodes[a], v = g.nodes[b];
          g.edges.push_back({std::min(u, v), std::max(u, v), nn::uniform01(rng)});
          edges.push_back({u, v});
        }
      }
    }
    if (build_groups(g) != oracle::oracle_components(edges, g.nodes)) ++group_bad;
  }
  int cm_bad = 0;
  double metric_err = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int c = 2 + static_cast<int>(nn::uniform_index(rng, 4));
    const std::size_t n = 1 + nn::uniform_index(rng, 80);
    std::vector<int> p(n), l(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = static_cast<int>(nn::uniform_index(rng, c));
      l[i] = static_cast<int>(nn::uniform_index(rng, c));
    }
    const auto r = compute_metrics(p, l, c);
    double correct = 0, rec = 0, f1 = 0;
    int used = 0;
    for (int k = 0; k < c; ++k) {
      std::int64_t tp = 0, pred = 0, sup = 0;
      for (int q = 0; q < c; ++q) {
        std::int64_t cell = 0;
        for (std::size_t i = 0; i < n; ++i) cell += l[i] == k && p[i] == q;
        if (r.confusion.at(k, q) != cell) ++cm_bad;
      }
      for (std::size_t i = 0; i < n; ++i) {
        tp += p[i] == k && l[i] == k;
        pred += p[i] == k;
        sup += l[i] == k;
      }
      correct += static_cast<double>(tp);
      if (sup == 0) continue;
      const double pr = pred ? static_cast<double>(tp) / pred : 0.0, rc = static_cast<double>(tp) / sup;
      rec += rc;
      f1 += pr + rc > 0 ? 2 * pr * rc / (pr + rc) : 0.0;
      ++used;
    }
    metric_err = std::max({metric_err, std::abs(r.accuracy - correct / n), std::abs(r.mpca - rec / used),
                           std::abs(r.macro_f1 - f1 / used)});
  }
  report(6, group_bad == 0 && cm_bad == 0 && metric_err < 1e-9,
         fmt("partition mismatches %d/1000, confusion cell mismatches %d, max metric err %.3g", group_bad, cm_bad,
             metric_err));
}

struct Trained {
  std::unique_ptr<Stage1Model> s1;
  std::unique_ptr<Stage2Model> s2;
};

Trained end_to_end() {
  const auto t0 = Clock::now();
  synth::CorpusSpec cs;
  cs.scenes = 40;
  cs.seed = 2024;
  const Dataset data = synth::generate_corpus(cs);
  TrainConfig cfg;
  cfg.seed = 1;
  cfg.val_fraction = 0.25;
  cfg.epochs = 50;
  auto r1 = train_stage1(data, cfg);
  auto r2 = train_stage2(data, {Stage2Variant::NoAppearance, FeatureSubset::All, 0, 0.1}, cfg);
  const auto [train, val] = split_dataset(data, cfg.val_fraction, cfg.seed);
  const Stage1Eval e1 = evaluate_stage1(*r1.model, val, cfg.prep, 0.35);
  const MetricReport e2 = evaluate_stage2(*r2.model, val, cfg.prep);
  const double sec = since(t0);
  const bool ok = train.size() == 30 && val.size() == 10 && e1.detection.recall >= 0.95 &&
                  e1.detection.precision >= 0.80 && e2.accuracy >= 0.90 && e2.macro_f1 >= 0.88 && sec < 600;
  report(7, ok,
         fmt("%zu/%zu scenes, stage1 R %.4f P %.4f @0.35, stage2 acc %.4f macro-F1 %.4f, %.1f s", train.size(),
             val.size(), e1.detection.recall, e1.detection.precision, e2.accuracy, e2.macro_f1, sec));
  return {std::move(r1.model), std::move(r2.model)};
}

void efficiency(Trained& m, const fs::path& root) {
  synth::CorpusSpec cs;
  cs.scenes = 1;
  cs.seed = 77;
  cs.scene.min_persons = 6;
  cs.scene.max_persons = 6;
  cs.scene.frames = 60;
  synth::write_corpus(synth::generate_corpus(cs), root / "fps", false);
  const Dataset data = load_dataset(root / "fps");
  const EfficiencyReport r = efficiency_report(data, *m.s1, *m.s2, nullptr, InferConfig{});
  report(8, r.per_pair_flops < 2'000'000 && r.fps >= 15.0 && r.mean_persons == 6.0,
         fmt("%llu FLOPs/pair (stage1 %llu + stage2 %llu), %.1f fps over %zu frames at 640x480, %.1f persons",
             static_cast<unsigned long long>(r.per_pair_flops), static_cast<unsigned long long>(r.stage1_flops),
             static_cast<unsigned long long>(r.stage2_flops), r.fps, r.frames, r.mean_persons));
}

void determinism(const fs::path& root) {
  synth::CorpusSpec cs;
  cs.scenes = 6;
  cs.seed = 9;
  cs.scene.frames = 20;
  cs.scene.width = 320;
  cs.scene.height = 240;
  cs.scene.max_persons = 5;
  cs.scene.max_entities = 4;
  const Dataset data = synth::generate_corpus(cs);
  TrainConfig cfg;
  cfg.seed = 42;
  cfg.epochs = 5;
  cfg.batch_size = 16;
  cfg.lr = 1e-3;
  cfg.val_fraction = 0.34;
  const Stage2Config arch{Stage2Variant::NoAppearance, FeatureSubset::All, 0, 0.1};
  const std::string a1 = nn::encode_checkpoint(train_stage1(data, cfg).model->to_store());
  const std::string b1 = nn::encode_checkpoint(train_stage1(data, cfg).model->to_store());
  const std::string a2 = nn::encode_checkpoint(train_stage2(data, arch, cfg).model->to_store());
  const std::string b2 = nn::encode_checkpoint(train_stage2(data, arch, cfg).model->to_store());
  nn::save_checkpoint(nn::decode_checkpoint(a1), root / "s1.ckpt");
  nn::save_checkpoint(nn::decode_checkpoint(a2), root / "s2.ckpt");
  const bool rt1 = nn::encode_checkpoint(load_stage1(nn::load_checkpoint(root / "s1.ckpt"))->to_store()) == a1;
  const bool rt2 = nn::encode_checkpoint(load_stage2(nn::load_checkpoint(root / "s2.ckpt"))->to_store()) == a2;
  report(9, a1 == b1 && a2 == b2 && rt1 && rt2,
         fmt("stage1 runs %s, stage2 runs %s, round trip %s/%s", a1 == b1 ? "identical" : "differ",
             a2 == b2 ? "identical" : "differ", rt1 ? "exact" : "differs", rt2 ? "exact" : "differs"));
}

#ifdef PAIRINT_CLI
int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(PAIRINT_CLI) + " " + args + " >>" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}
#endif

// Annotations in the ingestion schema written to disk, then the
// geometry / motion / geometry+motion grid trained and evaluated from there.
void ablation_grid(const fs::path& root) {
  const auto t0 = Clock::now();
  synth::CorpusSpec cs;
  cs.scenes = 8;
  cs.seed = 55;
  cs.scene.frames = 30;
  cs.prefix = "seq";
  const fs::path dir = root / "jrdb_like";
  synth::write_corpus(synth::generate_corpus(cs), dir, false);
  std::string detail;
  bool ok = true;
#ifdef PAIRINT_CLI
  const fs::path log = root / "grid.log";
  const std::string common = " --data " + dir.string() + " --seed 3 --epochs 15 --val-fraction 0.25";
  ok = cli("train-stage1" + common + " --out " + (root / "grid_s1.ckpt").string(), log) == 0;
  for (const char* subset : {"geometry", "motion", "all"}) {
    const fs::path ck = root / (std::string("grid_") + subset + ".ckpt");
    const fs::path out = root / (std::string("grid_eval_") + subset);
    bool run = ok && cli("train-stage2" + common + " --variant no-appearance --subset " + subset + " --out " +
                             ck.string(), log) == 0;
    run = run && cli("eval --data " + dir.string() + " --stage1 " + (root / "grid_s1.ckpt").string() +
                         " --stage2 " + ck.string() + " --out " + out.string(), log) == 0;
    double acc = NAN;
    if (run) {
      std::ifstream in(out / "metrics.json");
      const auto j = nlohmann::json::parse(in, nullptr, false);
      if (!j.is_discarded() && j.contains("stage2")) acc = j["stage2"].value("accuracy", NAN);
    }
    run = run && std::isfinite(acc);
    ok = ok && run;
    detail += fmt("%s acc %.3f; ", subset, acc);
  }
  detail += "via CLI, ";
#else
  const Dataset data = load_dataset(dir);
  TrainConfig cfg;
  cfg.seed = 3;
  cfg.epochs = 15;
  cfg.val_fraction = 0.25;
  const auto [train, val] = split_dataset(data, cfg.val_fraction, cfg.seed);
  for (auto subset : {FeatureSubset::Geometry, FeatureSubset::Motion, FeatureSubset::All}) {
    auto r = train_stage2(data, {Stage2Variant::NoAppearance, subset, 0, 0.1}, cfg);
    const double acc = evaluate_stage2(*r.model, val, cfg.prep).accuracy;
    ok = ok && std::isfinite(acc);
    detail += fmt("%s acc %.3f; ", std::string(subset_name(subset)).c_str(), acc);
  }
  detail += "via library, ";
#endif
  report(10, ok, detail + fmt("%.1f s", since(t0)));
}

}  // namespace

int main() {
  const fs::path root = testutil::temp_dir("acceptance");
  feature_oracle();
  symmetry();
  flow_accuracy();
  gradients();
  loss_and_optimizer();
  grouping_and_metrics();
  Trained models = end_to_end();
  efficiency(models, root);
  determinism(root);
  ablation_grid(root);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
