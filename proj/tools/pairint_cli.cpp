#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "pairint/annotate.hpp"
#include "pairint/binary_io.hpp"
#include "pairint/error.hpp"
#include "pairint/evaluator.hpp"
#include "pairint/flow.hpp"
#include "pairint/image.hpp"
#include "pairint/nn/checkpoint.hpp"
#include "pairint/pipeline.hpp"
#include "pairint/stage1.hpp"
#include "pairint/stage2.hpp"
#include "pairint/synth.hpp"
#include "pairint/trainer.hpp"

namespace fs = std::filesystem;
using namespace pairint;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

int exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidParams:
    case ErrorCode::InvalidThreshold:
    case ErrorCode::InvalidInterval:
      return kUsage;
    case ErrorCode::NoCachedForward:
      return kInternal;
    default:
      return kData;
  }
}

[[noreturn]] void usage(const std::string& msg) { throw Error(ErrorCode::InvalidParams, msg); }

struct PrepFlags {
  PreprocessConfig prep;
  bool keep_occluded = false;

  void add(CLI::App* app, int default_interval) {
    prep.interval = default_interval;
    app->add_option("--interval", prep.interval, "Use every k-th frame")->capture_default_str();
    app->add_option("--border-margin", prep.filter.border_margin, "Drop boxes closer than this to the image border")
        ->capture_default_str();
    app->add_flag("--keep-occluded", keep_occluded, "Keep occluded observations");
    app->add_option("--occlusion-iou", prep.filter.occlusion_iou)->capture_default_str();
    app->add_flag("--ego-motion", prep.ego_motion, "Subtract the background median flow");
    app->add_option("--pyramid-scale", prep.flow.pyramid_scale)->capture_default_str();
    app->add_option("--levels", prep.flow.levels)->capture_default_str();
    app->add_option("--window", prep.flow.window)->capture_default_str();
    app->add_option("--iterations", prep.flow.iterations)->capture_default_str();
    app->add_option("--poly-n", prep.flow.poly_n)->capture_default_str();
    app->add_option("--poly-sigma", prep.flow.poly_sigma)->capture_default_str();
  }

  PreprocessConfig get() const {
    PreprocessConfig p = prep;
    p.filter.drop_occluded = !keep_occluded;
    if (p.interval < 1) throw Error(ErrorCode::InvalidInterval, "--interval must be >= 1");
    p.flow.validate();
    return p;
  }
};

void check_theta(double theta) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw Error(ErrorCode::InvalidThreshold, "--theta must lie in [0, 1]");
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void write_text(const fs::path& p, const std::string& text) {
  ensure_parent(p);
  binio::write_file_atomic(p, text);
}

std::unique_ptr<Stage1Model> read_stage1(const fs::path& p) { return load_stage1(nn::load_checkpoint(p)); }
std::unique_ptr<Stage2Model> read_stage2(const fs::path& p) { return load_stage2(nn::load_checkpoint(p)); }

std::optional<AppearanceStore> read_store(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return load_appearance_embeddings(path);
}

void check_store(const Stage2Model& s2, const std::optional<AppearanceStore>& store) {
  if (s2.full() && !store) usage("the full variant needs --embeddings");
  if (s2.full() && store->dim() != s2.config().app_dim) {
    throw Error(ErrorCode::ShapeMismatch, "embedding dimension " + std::to_string(store->dim()) +
                                              " does not match the checkpoint's " +
                                              std::to_string(s2.config().app_dim));
  }
}

void check_variant(const Stage2Model& s2, const std::string& variant) {
  if (variant.empty()) return;
  const auto v = parse_variant(variant);
  if (!v) usage("unknown variant '" + variant + "'");
  if (*v != s2.config().variant) {
    usage("--variant " + variant + " does not match the checkpoint (" +
          std::string(variant_name(s2.config().variant)) + ")");
  }
}

void print_epochs(const TrainReport& r) {
  std::printf("%6s %12s %12s %12s\n", "epoch", "loss", "val_f1", "val_acc");
  for (const auto& e : r.epochs) {
    std::printf("%6d %12.6f", e.epoch, e.loss);
    if (e.val_macro_f1) {
      std::printf(" %12.4f %12.4f\n", *e.val_macro_f1, *e.val_accuracy);
    } else {
      std::printf(" %12s %12s\n", "-", "-");
    }
  }
  std::printf("best epoch %d, validation macro-F1 %.4f, %zu train / %zu val samples, %.1f s\n", r.best_epoch,
              r.best_macro_f1, r.train_samples, r.val_samples, r.wall_seconds);
}

// ---------------------------------------------------------------- train

struct TrainFlags {
  TrainConfig cfg;
  PrepFlags prep;
  std::string data, out, report;
  std::optional<std::uint64_t> seed;

  void add(CLI::App* app) {
    app->add_option("--data", data, "Dataset directory or annotations file")->required();
    app->add_option("--out", out, "Checkpoint path")->required();
    app->add_option("--report", report, "TrainReport JSON path");
    app->add_option("--seed", seed, "Random seed (required)")->required();
    app->add_option("--lr", cfg.lr)->capture_default_str();
    app->add_option("--weight-decay", cfg.weight_decay)->capture_default_str();
    app->add_option("--epochs", cfg.epochs)->capture_default_str();
    app->add_option("--batch-size", cfg.batch_size)->capture_default_str();
    app->add_option("--neg-pos-ratio", cfg.neg_pos_ratio)->capture_default_str();
    app->add_option("--flip-prob", cfg.flip_prob)->capture_default_str();
    app->add_option("--focal-gamma", cfg.focal_gamma)->capture_default_str();
    app->add_option("--eval-every", cfg.eval_every)->capture_default_str();
    app->add_option("--val-fraction", cfg.val_fraction)->capture_default_str();
    app->add_option("--theta", cfg.theta, "Stage-1 decision threshold")->capture_default_str();
    prep.add(app, kDefaultSampleInterval);
  }

  TrainConfig get() const {
    TrainConfig c = cfg;
    c.seed = *seed;
    c.prep = prep.get();
    check_theta(c.theta);
    c.validate();
    return c;
  }

  void finish(const nn::ParamStore& store, TrainReport& r) const {
    ensure_parent(out);
    nn::save_checkpoint(store, out);
    r.checkpoint_path = out;
    if (!report.empty()) write_text(report, train_report_json(r) + "\n");
    print_epochs(r);
    std::printf("checkpoint written to %s\n", out.c_str());
  }
};

// ---------------------------------------------------------------- eval

struct FrameIndex {
  // scene -> frame_id -> index into frames
  std::vector<std::map<int, std::size_t>> at;

  explicit FrameIndex(const Dataset& data) {
    for (const auto& seq : data) {
      auto& m = at.emplace_back();
      for (std::size_t i = 0; i < seq.frames.size(); ++i) m[seq.frames[i].frame_id] = i;
    }
  }
};

GroupingReport grouping_eval(const Dataset& data, Stage1Model& s1, Stage2Model& s2, const AppearanceStore* store,
                             const InferConfig& cfg) {
  const FrameIndex index(data);
  GroupingReport total;
  run_inference(data, s1, s2, store, cfg, [&](const FrameResult& res) {
    const SceneSequence& seq = data[res.scene];
    const Frame filtered =
        filter_observations(seq.frames[index.at[res.scene].at(res.frame_id)], cfg.prep.filter.border_margin,
                            cfg.prep.filter.drop_occluded, cfg.prep.filter.occlusion_iou);
    std::vector<LabeledPair> pred;
    for (const auto& c : res.classified) pred.push_back({c.pair.a, c.pair.b, c.label()});
    const auto gt_groups = ground_truth_groups(seq, filtered);
    const auto gt_pairs = ground_truth_pairs(seq, filtered);
    total.merge(grouping_scores(res.groups, pred, gt_groups, gt_pairs));
  });
  return total;
}

// ---------------------------------------------------------------- infer

// Output files written under temporary names and renamed on success.
class OutputSet {
 public:
  OutputSet(const fs::path& dir, std::initializer_list<const char*> names) {
    fs::create_directories(dir);
    for (const char* n : names) {
      Entry e{dir / n, dir / (std::string(n) + ".partial"), {}};
      e.stream.open(e.tmp, std::ios::trunc);
      if (!e.stream) throw Error(ErrorCode::Io, "cannot write " + e.tmp.string());
      entries_.push_back(std::move(e));
    }
  }
  ~OutputSet() {
    if (committed_) return;
    std::error_code ec;
    for (auto& e : entries_) {
      e.stream.close();
      fs::remove(e.tmp, ec);
      fs::remove(e.final, ec);
    }
  }
  std::ofstream& operator[](std::size_t i) { return entries_[i].stream; }
  void commit() {
    for (auto& e : entries_) {
      e.stream.close();
      if (!e.stream) throw Error(ErrorCode::Io, "write failed for " + e.tmp.string());
    }
    for (auto& e : entries_) fs::rename(e.tmp, e.final);
    committed_ = true;
  }

 private:
  struct Entry {
    fs::path final, tmp;
    std::ofstream stream;
  };
  std::vector<Entry> entries_;
  bool committed_ = false;
};

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  s = s.substr(b, e - b + 1);
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) s = s.substr(1, s.size() - 2);
  return s;
}

bool given(const std::vector<std::string>& args, const std::string& flag) {
  for (const auto& a : args) {
    if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
  }
  return false;
}

// Expands `--config FILE` of a subcommand into flags placed before the
// explicit ones; keys already given on the command line are skipped.
std::vector<std::string> expand_config(CLI::App& app, std::vector<std::string> args) {
  if (args.empty()) return args;
  CLI::App* sub = app.get_subcommand_no_throw(args[0]);
  if (!sub) return args;
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open config " + path);
  std::vector<std::string> extra;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) usage(path + ":" + std::to_string(n) + ": expected key=value");
    std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    std::replace(key.begin(), key.end(), '_', '-');
    const std::string flag = "--" + key;
    const CLI::Option* opt = sub->get_option_no_throw(flag);
    if (!opt || key == "config") usage(path + ":" + std::to_string(n) + ": unknown key '" + key + "'");
    if (given(args, flag)) continue;
    if (opt->get_type_size() == 0) {
      if (value == "true" || value == "1" || value == "on" || value == "yes") extra.push_back(flag);
    } else {
      extra.push_back(flag);
      extra.push_back(value);
    }
  }
  args.insert(args.begin() + 1, extra.begin(), extra.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage pairwise human interaction recognition"};
  app.name("pairint");
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");
  std::function<void()> run;

  auto command = [&](const char* name, const char* desc) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", "Flat key=value file; flags given on the command line win");
    return sub;
  };

  // ---- synth
  synth::CorpusSpec corpus;
  std::string synth_out;
  bool synth_no_flow = false;
  {
    auto* sub = command("synth", "Generate a synthetic corpus with exact labels and flow");
    sub->add_option("--out", synth_out, "Output directory")->required();
    sub->add_option("--scenes", corpus.scenes)->capture_default_str();
    sub->add_option("--seed", corpus.seed)->capture_default_str();
    sub->add_option("--prefix", corpus.prefix)->capture_default_str();
    sub->add_option("--frames", corpus.scene.frames)->capture_default_str();
    sub->add_option("--width", corpus.scene.width)->capture_default_str();
    sub->add_option("--height", corpus.scene.height)->capture_default_str();
    sub->add_option("--min-persons", corpus.scene.min_persons)->capture_default_str();
    sub->add_option("--max-persons", corpus.scene.max_persons)->capture_default_str();
    sub->add_flag("--no-flow", synth_no_flow, "Skip the ground-truth flow files");
    sub->callback([&] {
      run = [&] {
        if (corpus.scenes < 1) usage("--scenes must be >= 1");
        if (corpus.scene.frames < 1) usage("--frames must be >= 1");
        if (corpus.scene.min_persons < 2 || corpus.scene.max_persons < corpus.scene.min_persons) {
          usage("need 2 <= --min-persons <= --max-persons");
        }
        const Dataset data = synth::generate_corpus(corpus);
        synth::write_corpus(data, synth_out, !synth_no_flow);
        std::size_t frames = 0, pairs = 0;
        std::array<std::size_t, kNumInteractionClasses> per{};
        for (const auto& seq : data) {
          frames += seq.frames.size();
          for (const auto& [fid, labels] : seq.labels) {
            for (const auto& l : labels) {
              if (!l.label) continue;
              ++pairs;
              ++per[static_cast<std::size_t>(*l.label)];
            }
          }
        }
        std::printf("%zu scenes, %zu frames, %zu labeled pairs written to %s\n", data.size(), frames, pairs,
                    synth_out.c_str());
        for (int c = 0; c < kNumInteractionClasses; ++c) {
          std::printf("  %-18s %zu\n", std::string(label_name(static_cast<InteractionClass>(c))).c_str(), per[c]);
        }
      };
    });
  }

  // ---- flow
  std::string flow_prev, flow_next, flow_out, flow_color;
  FarnebackParams flow_params;
  {
    auto* sub = command("flow", "Dense optical flow between two images");
    sub->add_option("prev", flow_prev, "First image")->required();
    sub->add_option("next", flow_next, "Second image")->required();
    sub->add_option("--out", flow_out, "FLOW1 output")->required();
    sub->add_option("--color", flow_color, "Color-coded PNG");
    sub->add_option("--pyramid-scale", flow_params.pyramid_scale)->capture_default_str();
    sub->add_option("--levels", flow_params.levels)->capture_default_str();
    sub->add_option("--window", flow_params.window)->capture_default_str();
    sub->add_option("--iterations", flow_params.iterations)->capture_default_str();
    sub->add_option("--poly-n", flow_params.poly_n)->capture_default_str();
    sub->add_option("--poly-sigma", flow_params.poly_sigma)->capture_default_str();
    sub->callback([&] {
      run = [&] {
        flow_params.validate();
        const GrayImage a = read_gray_image(flow_prev);
        const GrayImage b = read_gray_image(flow_next);
        const FlowField f = estimate_flow(a, b, flow_params);
        ensure_parent(flow_out);
        write_flow(flow_out, f);
        if (!flow_color.empty()) {
          ensure_parent(flow_color);
          write_png(flow_color, flow_to_color(f));
        }
        std::printf("%dx%d flow written to %s\n", f.width, f.height, flow_out.c_str());
      };
    });
  }

  // ---- train-stage1
  TrainFlags t1;
  Stage1Config arch1;
  {
    auto* sub = command("train-stage1", "Train the Stage-1 interaction detector");
    t1.add(sub);
    sub->add_option("--hidden1", arch1.hidden1)->capture_default_str();
    sub->add_option("--hidden2", arch1.hidden2)->capture_default_str();
    sub->add_option("--dropout", arch1.dropout)->capture_default_str();
    sub->callback([&] {
      run = [&] {
        const TrainConfig cfg = t1.get();
        const Dataset data = load_dataset(t1.data);
        Stage1Result r = train_stage1(data, cfg, arch1);
        t1.finish(r.model->to_store(), r.report);
        if (r.report.best_detection) {
          std::printf("validation detection precision %.4f recall %.4f at theta %.2f\n",
                      r.report.best_detection->precision, r.report.best_detection->recall, cfg.theta);
        }
      };
    });
  }

  // ---- train-stage2
  TrainFlags t2;
  std::string t2_variant = "no-appearance", t2_subset = "all", t2_embeddings, t2_source = "gt", t2_stage1;
  double t2_dropout = 0.1;
  {
    auto* sub = command("train-stage2", "Train the Stage-2 interaction classifier");
    t2.add(sub);
    sub->add_option("--variant", t2_variant, "full | no-appearance")->capture_default_str();
    sub->add_option("--subset", t2_subset, "Descriptor columns: all | geometry | motion")->capture_default_str();
    sub->add_option("--embeddings", t2_embeddings, "Appearance embeddings (full variant)");
    sub->add_option("--pair-source", t2_source, "gt | stage1 (ground_truth | stage1_proposals)")->capture_default_str();
    sub->add_option("--stage1", t2_stage1, "Stage-1 checkpoint for --pair-source stage1");
    sub->add_option("--dropout", t2_dropout)->capture_default_str();
    sub->callback([&] {
      run = [&] {
        TrainConfig cfg = t2.get();
        Stage2Config arch;
        const auto v = parse_variant(t2_variant);
        if (!v) usage("unknown variant '" + t2_variant + "'");
        const auto s = parse_subset(t2_subset);
        if (!s) usage("unknown subset '" + t2_subset + "'");
        const auto src = parse_pair_source(t2_source);
        if (!src) usage("unknown pair source '" + t2_source + "'");
        cfg.stage2_pair_source = *src;
        if (*src == PairSource::Stage1Proposals && t2_stage1.empty()) usage("--pair-source stage1 needs --stage1");
        if (*v == Stage2Variant::Full && t2_embeddings.empty()) usage("the full variant needs --embeddings");
        arch.variant = *v;
        arch.subset = *s;
        arch.dropout = t2_dropout;
        const auto store = read_store(t2_embeddings);
        if (store) arch.app_dim = store->dim();
        std::unique_ptr<Stage1Model> proposer;
        if (!t2_stage1.empty()) proposer = read_stage1(t2_stage1);
        const Dataset data = load_dataset(t2.data);
        Stage2Result r = train_stage2(data, arch, cfg, store ? &*store : nullptr, proposer.get());
        t2.finish(r.model->to_store(), r.report);
        if (r.report.best_val) std::printf("\n%s", metrics_table(*r.report.best_val).c_str());
      };
    });
  }

  // ---- eval
  std::string ev_data, ev_s1, ev_s2, ev_emb, ev_out;
  double ev_theta = kDefaultTheta;
  PrepFlags ev_prep;
  {
    auto* sub = command("eval", "Detection, classification and grouping metrics");
    sub->add_option("--data", ev_data)->required();
    sub->add_option("--stage1", ev_s1, "Stage-1 checkpoint");
    sub->add_option("--stage2", ev_s2, "Stage-2 checkpoint");
    sub->add_option("--embeddings", ev_emb);
    sub->add_option("--theta", ev_theta)->capture_default_str();
    sub->add_option("--out", ev_out, "Directory for metrics.json and confusion.png");
    ev_prep.add(sub, kDefaultSampleInterval);
    sub->callback([&] {
      run = [&] {
        check_theta(ev_theta);
        const PreprocessConfig prep = ev_prep.get();
        if (ev_s1.empty() && ev_s2.empty()) usage("give --stage1, --stage2 or both");
        std::unique_ptr<Stage1Model> s1;
        std::unique_ptr<Stage2Model> s2;
        if (!ev_s1.empty()) s1 = read_stage1(ev_s1);
        if (!ev_s2.empty()) s2 = read_stage2(ev_s2);
        const auto store = read_store(ev_emb);
        if (s2) check_store(*s2, store);
        const Dataset data = load_dataset(ev_data);
        if (data.empty()) throw Error(ErrorCode::EmptyDataset, "no annotation files under " + ev_data);

        json out;
        if (s1) {
          const Stage1Eval e = evaluate_stage1(*s1, data, prep, ev_theta);
          out["detection"] = json::parse(detection_json(e.detection));
          out["stage1"] = json::parse(metrics_json(e.binary));
          std::printf("Stage 1 (theta %.2f): precision %.4f recall %.4f (%lld proposed, %lld annotated)\n\n",
                      ev_theta, e.detection.precision, e.detection.recall,
                      static_cast<long long>(e.detection.predicted), static_cast<long long>(e.detection.annotated));
        }
        std::optional<MetricReport> m2;
        if (s2) {
          m2 = evaluate_stage2(*s2, data, prep, store ? &*store : nullptr);
          out["stage2"] = json::parse(metrics_json(*m2));
          std::printf("Stage 2 (%s, ground-truth pairs)\n%s\n", std::string(variant_name(s2->config().variant)).c_str(),
                      metrics_table(*m2).c_str());
        }
        if (s1 && s2) {
          InferConfig icfg;
          icfg.prep = prep;
          icfg.theta = ev_theta;
          const GroupingReport g = grouping_eval(data, *s1, *s2, store ? &*store : nullptr, icfg);
          out["grouping"] = json::parse(grouping_json(g));
          std::printf("Grouping: membership %.4f, social activity %.4f over %lld persons\n",
                      g.membership_accuracy, g.social_activity_accuracy, static_cast<long long>(g.persons));
        }
        if (!ev_out.empty()) {
          write_text(fs::path(ev_out) / "metrics.json", out.dump(2) + "\n");
          if (m2) write_png(fs::path(ev_out) / "confusion.png", confusion_heatmap(m2->confusion));
        }
      };
    });
  }

  // ---- infer
  std::string in_data, in_s1, in_s2, in_emb, in_out, in_variant;
  double in_theta = kDefaultTheta;
  PrepFlags in_prep;
  {
    auto* sub = command("infer", "Run both stages and write proposals, classifications and groups");
    sub->add_option("--data", in_data)->required();
    sub->add_option("--stage1", in_s1)->required();
    sub->add_option("--stage2", in_s2)->required();
    sub->add_option("--embeddings", in_emb);
    sub->add_option("--variant", in_variant, "Expected Stage-2 variant (checked against the checkpoint)");
    sub->add_option("--theta", in_theta)->capture_default_str();
    sub->add_option("--out", in_out, "Output directory")->required();
    in_prep.add(sub, 1);
    sub->callback([&] {
      run = [&] {
        check_theta(in_theta);
        InferConfig cfg;
        cfg.prep = in_prep.get();
        cfg.theta = in_theta;
        auto s1 = read_stage1(in_s1);
        auto s2 = read_stage2(in_s2);
        check_variant(*s2, in_variant);
        const auto store = read_store(in_emb);
        check_store(*s2, store);
        const Dataset data = load_dataset(in_data);

        OutputSet out(in_out, {"proposals.jsonl", "classifications.jsonl", "groups.jsonl"});
        const InferStats st = run_inference(data, *s1, *s2, store ? &*store : nullptr, cfg, [&](const FrameResult& r) {
          const std::string& scene = data[r.scene].name;
          out[0] << proposals_json_line(r.frame_id, r.proposals, scene) << '\n';
          for (const auto& c : r.classified) out[1] << classification_json_line(c.pair, c.probs, scene) << '\n';
          out[2] << groups_json_line(r.frame_id, r.groups, scene) << '\n';
        });
        out.commit();
        std::printf("%zu frames, %zu pairs, %zu proposals in %.3f s (%.1f fps)\n", st.frames, st.pairs, st.proposals,
                    st.seconds, st.fps());
      };
    });
  }

  // ---- flops
  std::string fl_s1, fl_s2, fl_data, fl_json, fl_variant = "no-appearance", fl_subset = "all";
  std::size_t fl_app_dim = 512;
  double fl_theta = kDefaultTheta;
  PrepFlags fl_prep;
  {
    auto* sub = command("flops", "Per-pair FLOPs and measured throughput");
    sub->add_option("--stage1", fl_s1, "Stage-1 checkpoint (default: fresh model)");
    sub->add_option("--stage2", fl_s2, "Stage-2 checkpoint (default: fresh model)");
    sub->add_option("--variant", fl_variant, "Architecture when no Stage-2 checkpoint is given")->capture_default_str();
    sub->add_option("--subset", fl_subset)->capture_default_str();
    sub->add_option("--app-dim", fl_app_dim, "Appearance dimension for a fresh full model")->capture_default_str();
    sub->add_option("--data", fl_data, "Dataset for the throughput measurement");
    sub->add_option("--theta", fl_theta)->capture_default_str();
    sub->add_option("--json", fl_json, "Write the report as JSON");
    fl_prep.add(sub, 1);
    sub->callback([&] {
      run = [&] {
        check_theta(fl_theta);
        InferConfig cfg;
        cfg.prep = fl_prep.get();
        cfg.theta = fl_theta;
        std::unique_ptr<Stage1Model> s1 = fl_s1.empty() ? std::make_unique<Stage1Model>() : read_stage1(fl_s1);
        std::unique_ptr<Stage2Model> s2;
        if (fl_s2.empty()) {
          Stage2Config arch;
          const auto v = parse_variant(fl_variant);
          if (!v) usage("unknown variant '" + fl_variant + "'");
          const auto s = parse_subset(fl_subset);
          if (!s) usage("unknown subset '" + fl_subset + "'");
          arch.variant = *v;
          arch.subset = *s;
          if (*v == Stage2Variant::Full) arch.app_dim = fl_app_dim;
          s2 = std::make_unique<Stage2Model>(arch);
        } else {
          s2 = read_stage2(fl_s2);
        }
        EfficiencyReport r;
        if (!fl_data.empty()) {
          if (s2->full()) usage("throughput measurement supports the no-appearance variant only");
          r = efficiency_report(load_dataset(fl_data), *s1, *s2, nullptr, cfg);
        } else {
          r.stage1_flops = nn::count_flops(s1->describe());
          r.stage2_flops = stage2_pair_flops(*s2);
          r.per_pair_flops = r.stage1_flops + r.stage2_flops;
        }
        std::printf("stage 1 per pair   %12llu FLOPs\n", static_cast<unsigned long long>(r.stage1_flops));
        std::printf("stage 2 per pair   %12llu FLOPs (%s)\n", static_cast<unsigned long long>(r.stage2_flops),
                    std::string(variant_name(s2->config().variant)).c_str());
        std::printf("total per pair     %12llu FLOPs\n", static_cast<unsigned long long>(r.per_pair_flops));
        if (r.frames) {
          std::printf("flow per frame     %12llu FLOPs\n", static_cast<unsigned long long>(r.flow_flops_per_frame));
          std::printf("throughput         %12.1f fps over %zu frames (%.1f persons/frame)\n", r.fps, r.frames,
                      r.mean_persons);
        }
        if (!fl_json.empty()) write_text(fl_json, efficiency_json(r) + "\n");
      };
    });
  }

  // ---- annotate
  std::string an_data, an_inference, an_out;
  {
    auto* sub = command("annotate", "Draw boxes, interaction edges and class labels");
    sub->add_option("--data", an_data)->required();
    sub->add_option("--inference", an_inference, "Directory written by infer")->required();
    sub->add_option("--out", an_out, "Output directory")->required();
    sub->callback([&] {
      run = [&] {
        const Dataset data = load_dataset(an_data);
        const std::size_t n = annotate_dataset(data, an_inference, an_out);
        std::printf("%zu annotated frames written to %s\n", n, an_out.c_str());
      };
    });
  }

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(app, std::move(args));
    std::reverse(args.begin(), args.end());  // CLI11 consumes the vector from the back
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  } catch (const Error& e) {
    std::cerr << "pairint: " << e.what() << '\n';
    return exit_code(e.code());
  }
  try {
    if (run) run();
    return kOk;
  } catch (const Error& e) {
    std::cerr << "pairint: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "pairint: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "pairint: internal error: " << e.what() << '\n';
    return kInternal;
  }
}
