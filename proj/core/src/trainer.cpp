#include "pairint/trainer.hpp"

#include <chrono>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "pairint/error.hpp"
#include "pairint/nn/optim.hpp"

namespace pairint {

namespace {

// sub-streams of the training seed
enum Stream : std::uint64_t { kInit = 1, kSampler, kDropout, kFlip, kNegatives };

void invalid(const std::string& why) { throw Error(ErrorCode::InvalidParams, why); }

struct Prepared {
  SceneSequence filtered;
  std::vector<std::size_t> indices;  // sampled frame indices into the raw sequence
};

Prepared prepare(const SceneSequence& raw, const PreprocessConfig& prep) {
  return {filter_sequence(raw, prep.filter), sampled_indices(raw.frames.size(), prep.interval)};
}

SceneSequence sampled_view(const Prepared& p) {
  SceneSequence out = p.filtered;
  out.frames.clear();
  out.labels.clear();
  for (std::size_t i : p.indices) {
    const Frame& f = p.filtered.frames[i];
    out.frames.push_back(f);
    if (auto it = p.filtered.labels.find(f.frame_id); it != p.filtered.labels.end()) out.labels.insert(*it);
  }
  return out;
}

template <class T>
nn::Tensor<T> rows_tensor(std::size_t n, std::size_t d, const std::function<const double*(std::size_t)>& row) {
  nn::Tensor<T> x({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = row(i);
    for (std::size_t c = 0; c < d; ++c) x(i, c) = static_cast<T>(r[c]);
  }
  return x;
}

struct ValResult {
  MetricReport metrics;
  std::optional<DetectionReport> detection;
};

// Shared optimisation loop: weighted sampling, focal loss, AdamW and
// best-by-validation-Macro-F1 selection.
template <class Net>
TrainReport fit(Net& net, std::span<const int> labels, int num_classes, const TrainConfig& cfg,
                const std::function<nn::Tensor<float>(std::span<const std::size_t>, nn::Rng&, nn::Rng&)>& forward,
                const std::function<ValResult()>& validate) {
  TrainReport report;
  report.seed = cfg.seed;
  report.train_samples = labels.size();
  nn::Rng sampler(nn::derive_seed(cfg.seed, kSampler));
  nn::Rng dropout(nn::derive_seed(cfg.seed, kDropout));
  nn::Rng flip(nn::derive_seed(cfg.seed, kFlip));

  nn::FocalLossCfg loss_cfg;
  loss_cfg.gamma = cfg.focal_gamma;
  loss_cfg.class_weights = nn::inverse_frequency_weights(labels, num_classes);
  nn::AdamWConfig opt_cfg;
  opt_cfg.lr = cfg.lr;
  opt_cfg.weight_decay = cfg.weight_decay;
  nn::AdamW<float> opt(opt_cfg);

  nn::ParamStore best = net.to_store();
  bool have_best = false;
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = nn::weighted_sampler(labels, sampler, labels.size());
    double total = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::span<const std::size_t> batch(order.data() + start, std::min(bs, order.size() - start));
      std::vector<int> targets;
      for (std::size_t i : batch) targets.push_back(labels[i]);
      const auto logits = forward(batch, dropout, flip);
      const auto loss = nn::focal_loss(logits, targets, loss_cfg);
      nn::zero_grad<float>(net.params());
      net.backward(loss.grad);
      opt.step(net.params());
      total += loss.loss * static_cast<double>(batch.size());
    }
    EpochLog log;
    log.epoch = epoch;
    log.loss = total / static_cast<double>(order.size());
    if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
      ValResult v = validate();
      log.val_macro_f1 = v.metrics.macro_f1;
      log.val_accuracy = v.metrics.accuracy;
      if (!have_best || v.metrics.macro_f1 > report.best_macro_f1) {
        have_best = true;
        best = net.to_store();
        report.best_epoch = epoch;
        report.best_macro_f1 = v.metrics.macro_f1;
        report.best_val = std::move(v.metrics);
        report.best_detection = v.detection;
      }
    }
    report.epochs.push_back(log);
  }
  if (have_best) net.load(best);
  return report;
}

}  // namespace

std::string_view pair_source_name(PairSource s) noexcept {
  return s == PairSource::GroundTruth ? "ground_truth" : "stage1_proposals";
}

std::optional<PairSource> parse_pair_source(std::string_view s) noexcept {
  if (s == "ground_truth" || s == "gt") return PairSource::GroundTruth;
  if (s == "stage1_proposals" || s == "stage1") return PairSource::Stage1Proposals;
  return std::nullopt;
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) invalid("lr must be non-negative");
  if (!(weight_decay >= 0.0)) invalid("weight_decay must be non-negative");
  if (epochs < 1) invalid("epochs must be >= 1");
  if (batch_size < 1) invalid("batch_size must be >= 1");
  if (!(neg_pos_ratio > 0.0)) invalid("neg_pos_ratio must be positive");
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) invalid("flip_prob must lie in [0, 1]");
  if (!(focal_gamma >= 0.0)) invalid("focal_gamma must be non-negative");
  if (eval_every < 1) invalid("eval_every must be >= 1");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) invalid("val_fraction must lie in (0, 1)");
  if (!(theta >= 0.0 && theta <= 1.0)) {
    throw Error(ErrorCode::InvalidThreshold, "theta must lie in [0, 1], got " + std::to_string(theta));
  }
  if (prep.interval < 1) {
    throw Error(ErrorCode::InvalidInterval, "interval must be >= 1, got " + std::to_string(prep.interval));
  }
  prep.flow.validate();
}

std::string train_report_json(const TrainReport& r) {
  using nlohmann::json;
  json j;
  j["stage"] = r.stage;
  j["seed"] = r.seed;
  j["train_samples"] = r.train_samples;
  j["val_samples"] = r.val_samples;
  j["best_epoch"] = r.best_epoch;
  j["best_val_macro_f1"] = r.best_macro_f1;
  j["checkpoint"] = r.checkpoint_path;
  j["wall_seconds"] = r.wall_seconds;
  json epochs = json::array();
  for (const auto& e : r.epochs) {
    json je{{"epoch", e.epoch}, {"loss", e.loss}};
    if (e.val_macro_f1) je["val_macro_f1"] = *e.val_macro_f1;
    if (e.val_accuracy) je["val_accuracy"] = *e.val_accuracy;
    epochs.push_back(je);
  }
  j["epochs"] = epochs;
  if (r.best_val) j["best_val"] = json::parse(metrics_json(*r.best_val));
  if (r.best_detection) j["best_detection"] = json::parse(detection_json(*r.best_detection));
  return j.dump(2);
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double val_fraction, std::uint64_t seed) {
  if (data.size() < 2) {
    throw Error(ErrorCode::TooFewScenes, "need at least 2 scenes to split, got " + std::to_string(data.size()));
  }
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) invalid("val_fraction must lie in (0, 1)");
  const std::size_t n = data.size();
  const std::size_t n_val =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(val_fraction * n)), 1, n - 1);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  nn::Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[nn::uniform_index(rng, i)]);
  std::vector<bool> is_val(n, false);
  for (std::size_t k = 0; k < n_val; ++k) is_val[perm[k]] = true;
  std::pair<Dataset, Dataset> out;
  for (std::size_t i = 0; i < n; ++i) (is_val[i] ? out.second : out.first).push_back(data[i]);
  return out;
}

std::vector<Stage1Sample> build_stage1_dataset(const SceneSequence& seq, double neg_pos_ratio, nn::Rng& rng,
                                               int scene_index) {
  if (!(neg_pos_ratio > 0.0)) invalid("neg_pos_ratio must be positive");
  std::vector<Stage1Sample> out;
  std::size_t positives = 0;
  for (const auto& frame : seq.frames) {
    const FramePairs fp = frame_pairs(frame);
    std::vector<std::size_t> pos, neg;
    for (std::size_t k = 0; k < fp.pairs.size(); ++k) {
      const bool p = seq.label_of(frame.frame_id, fp.pairs[k].first.track_id, fp.pairs[k].second.track_id).has_value();
      (p ? pos : neg).push_back(k);
    }
    const auto want = static_cast<std::size_t>(std::llround(neg_pos_ratio * static_cast<double>(pos.size())));
    const std::size_t keep = std::min(want, neg.size());
    // partial Fisher-Yates, then back to enumeration order
    for (std::size_t i = 0; i < keep; ++i) std::swap(neg[i], neg[i + nn::uniform_index(rng, neg.size() - i)]);
    neg.resize(keep);
    std::sort(neg.begin(), neg.end());
    std::vector<std::size_t> chosen = pos;
    chosen.insert(chosen.end(), neg.begin(), neg.end());
    std::sort(chosen.begin(), chosen.end());
    for (std::size_t k : chosen) {
      const bool p = std::binary_search(pos.begin(), pos.end(), k);
      out.push_back({scene_index, frame.frame_id, fp.pairs[k].first.track_id, fp.pairs[k].second.track_id, fp.g[k], p});
    }
    positives += pos.size();
  }
  if (positives == 0) throw Error(ErrorCode::NoPositives, "sequence '" + seq.name + "' has no interacting pairs");
  return out;
}

std::vector<Stage2Sample> build_stage2_dataset(const SceneSequence& seq, const PreprocessConfig& prep, bool with_flip,
                                               int scene_index, Stage1Model* proposer, double theta) {
  const Prepared p = prepare(seq, prep);
  FlowProvider flows(seq, prep.flow, prep.ego_motion);
  std::vector<Stage2Sample> out;
  for (std::size_t i : p.indices) {
    const Frame& frame = p.filtered.frames[i];
    const FramePairs fp = frame_pairs(frame);
    std::vector<std::size_t> chosen;
    std::vector<int> labels;
    const std::vector<double> scores = proposer ? score_pairs(*proposer, fp.g) : std::vector<double>{};
    for (std::size_t k = 0; k < fp.pairs.size(); ++k) {
      const auto lab = p.filtered.label_of(frame.frame_id, fp.pairs[k].first.track_id, fp.pairs[k].second.track_id);
      if (!lab) continue;
      if (proposer && scores[k] < theta) continue;
      chosen.push_back(k);
      labels.push_back(static_cast<int>(*lab));
    }
    if (chosen.empty()) continue;
    const FlowField flow = flows.flow_at(i);
    const auto f = motion_features(fp, chosen, flow, prep.mask());
    const auto ff = with_flip ? mirrored_motion_features(fp, chosen, flow, prep.mask()) : f;
    for (std::size_t k = 0; k < chosen.size(); ++k) {
      out.push_back({scene_index, frame.frame_id, fp.pairs[chosen[k]].first.track_id,
                     fp.pairs[chosen[k]].second.track_id, f[k], ff[k], labels[k]});
    }
  }
  return out;
}

Stage1Eval evaluate_stage1(Stage1Model& model, const Dataset& data, const PreprocessConfig& prep, double theta) {
  std::vector<int> preds, truth;
  std::vector<PairKey> predicted, annotated;
  for (std::size_t s = 0; s < data.size(); ++s) {
    const SceneSequence view = sampled_view(prepare(data[s], prep));
    for (const auto& frame : view.frames) {
      const FramePairs fp = frame_pairs(frame);
      const auto scores = score_pairs(model, fp.g);
      for (std::size_t k = 0; k < fp.pairs.size(); ++k) {
        const int a = fp.pairs[k].first.track_id;
        const int b = fp.pairs[k].second.track_id;
        const bool t = view.label_of(frame.frame_id, a, b).has_value();
        const bool p = scores[k] >= theta;
        preds.push_back(p);
        truth.push_back(t);
        const auto key = PairKey::make(static_cast<int>(s), frame.frame_id, a, b);
        if (p) predicted.push_back(key);
        if (t) annotated.push_back(key);
      }
    }
  }
  if (preds.empty()) throw Error(ErrorCode::Empty, "no pairs to evaluate");
  Stage1Eval out{compute_metrics(preds, truth, 2), detection_pr(predicted, annotated)};
  out.binary.class_names = {"not_interacting", "interacting"};
  return out;
}

namespace {

nn::Tensor<float> stage2_batch_forward(Stage2Model& model, const std::vector<Stage2Sample>& samples,
                                       std::span<const std::size_t> idx, const std::vector<bool>* flipped,
                                       const AppearanceStore* store, nn::Mode mode, nn::Rng& rng) {
  const std::size_t n = idx.size();
  nn::Tensor<float> x({n, kStage2Dims});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = samples[idx[i]];
    const auto& f = (flipped && (*flipped)[i]) ? s.f_flip : s.f;
    for (std::size_t c = 0; c < kStage2Dims; ++c) x(i, c) = static_cast<float>(f.f[c]);
  }
  if (!model.full()) return model.forward(x, nullptr, nullptr, mode, rng);
  if (!store) throw Error(ErrorCode::MissingEmbedding, "full variant needs appearance embeddings");
  const std::size_t d = model.config().app_dim;
  nn::Tensor<float> va({n, d}), vb({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = samples[idx[i]];
    const auto& ea = store->get(s.frame_id, s.a);
    const auto& eb = store->get(s.frame_id, s.b);
    std::copy(ea.begin(), ea.end(), va.row(i).begin());
    std::copy(eb.begin(), eb.end(), vb.row(i).begin());
  }
  return model.forward(x, &va, &vb, mode, rng);
}

}  // namespace

MetricReport stage2_metrics(Stage2Model& model, const std::vector<Stage2Sample>& samples,
                            const AppearanceStore* store) {
  std::vector<PairContext> ctx;
  std::vector<int> preds, truth;
  for (const auto& smp : samples) {
    ctx.push_back({smp.frame_id, smp.a, smp.b, smp.f});
    truth.push_back(smp.label);
  }
  for (const auto& p : classify_pairs(model, ctx, store)) preds.push_back(static_cast<int>(argmax_class(p)));
  return compute_metrics(preds, truth, kNumInteractionClasses);
}

MetricReport evaluate_stage2(Stage2Model& model, const Dataset& data, const PreprocessConfig& prep,
                             const AppearanceStore* store) {
  std::vector<Stage2Sample> samples;
  for (std::size_t s = 0; s < data.size(); ++s) {
    auto part = build_stage2_dataset(data[s], prep, false, static_cast<int>(s));
    samples.insert(samples.end(), part.begin(), part.end());
  }
  return stage2_metrics(model, samples, store);
}

Stage1Result train_stage1(const Dataset& data, const TrainConfig& cfg, const Stage1Config& arch) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  auto [train, val] = split_dataset(data, cfg.val_fraction, cfg.seed);

  nn::Rng neg_rng(nn::derive_seed(cfg.seed, kNegatives));
  std::vector<Stage1Sample> samples;
  std::size_t scenes_with_positives = 0;
  for (std::size_t s = 0; s < train.size(); ++s) {
    const SceneSequence view = sampled_view(prepare(train[s], cfg.prep));
    try {
      auto part = build_stage1_dataset(view, cfg.neg_pos_ratio, neg_rng, static_cast<int>(s));
      samples.insert(samples.end(), part.begin(), part.end());
      ++scenes_with_positives;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoPositives) throw;
    }
  }
  if (scenes_with_positives == 0) throw Error(ErrorCode::NoPositives, "training split has no interacting pairs");

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  for (const auto& s : samples) {
    rows.emplace_back(s.g.g.begin(), s.g.g.end());
    labels.push_back(s.positive ? kInteractingIndex : 1 - kInteractingIndex);
  }

  auto model = std::make_unique<Stage1Model>(arch);
  nn::Rng init(nn::derive_seed(cfg.seed, kInit));
  model->init(init);
  model->set_feature_stats(compute_feature_stats(rows));

  auto forward = [&](std::span<const std::size_t> idx, nn::Rng& drop, nn::Rng&) {
    auto x = rows_tensor<float>(idx.size(), kStage1Dims, [&](std::size_t i) { return rows[idx[i]].data(); });
    return model->forward(x, nn::Mode::Train, drop);
  };
  std::size_t val_pairs = 0;
  auto validate = [&] {
    Stage1Eval ev = evaluate_stage1(*model, val, cfg.prep, cfg.theta);
    val_pairs = static_cast<std::size_t>(ev.binary.confusion.total());
    return ValResult{std::move(ev.binary), ev.detection};
  };
  TrainReport report = fit(*model, labels, 2, cfg, forward, validate);
  report.stage = "stage1";
  report.val_samples = val_pairs;
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(model), std::move(report)};
}

Stage2Result train_stage2(const Dataset& data, const Stage2Config& arch, const TrainConfig& cfg,
                          const AppearanceStore* store, Stage1Model* proposer) {
  cfg.validate();
  if (arch.variant == Stage2Variant::Full && !store) {
    throw Error(ErrorCode::MissingEmbedding, "full variant needs appearance embeddings");
  }
  if (cfg.stage2_pair_source == PairSource::Stage1Proposals && !proposer) {
    invalid("stage1_proposals pair source needs a Stage-1 model");
  }
  const auto t0 = std::chrono::steady_clock::now();
  auto [train, val] = split_dataset(data, cfg.val_fraction, cfg.seed);

  std::vector<Stage2Sample> samples;
  Stage1Model* prop = cfg.stage2_pair_source == PairSource::Stage1Proposals ? proposer : nullptr;
  for (std::size_t s = 0; s < train.size(); ++s) {
    auto part = build_stage2_dataset(train[s], cfg.prep, cfg.flip_prob > 0.0, static_cast<int>(s), prop, cfg.theta);
    samples.insert(samples.end(), part.begin(), part.end());
  }
  if (samples.empty()) throw Error(ErrorCode::EmptyDataset, "no labeled interacting pairs in the training split");
  if (store) {
    for (const auto& s : samples) {
      store->get(s.frame_id, s.a);
      store->get(s.frame_id, s.b);
    }
  }

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  for (const auto& s : samples) {
    rows.emplace_back(s.f.f.begin(), s.f.f.end());
    labels.push_back(s.label);
  }

  auto model = std::make_unique<Stage2Model>(arch);
  nn::Rng init(nn::derive_seed(cfg.seed, kInit));
  model->init(init);
  model->set_feature_stats(compute_feature_stats(rows));

  auto forward = [&](std::span<const std::size_t> idx, nn::Rng& drop, nn::Rng& flip) {
    std::vector<bool> flipped(idx.size(), false);
    if (cfg.flip_prob > 0.0) {
      for (std::size_t i = 0; i < idx.size(); ++i) flipped[i] = nn::uniform01(flip) < cfg.flip_prob;
    }
    return stage2_batch_forward(*model, samples, idx, &flipped, store, nn::Mode::Train, drop);
  };
  std::vector<Stage2Sample> val_samples;
  for (std::size_t s = 0; s < val.size(); ++s) {
    auto part = build_stage2_dataset(val[s], cfg.prep, false, static_cast<int>(s));
    val_samples.insert(val_samples.end(), part.begin(), part.end());
  }
  if (val_samples.empty()) throw Error(ErrorCode::EmptyDataset, "no labeled interacting pairs in the validation split");
  auto validate = [&] { return ValResult{stage2_metrics(*model, val_samples, store), std::nullopt}; };
  TrainReport report = fit(*model, labels, kNumInteractionClasses, cfg, forward, validate);
  report.stage = "stage2";
  report.val_samples = val_samples.size();
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(model), std::move(report)};
}

}  // namespace pairint
