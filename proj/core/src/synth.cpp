#include "pairint/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <numeric>

#include "pairint/error.hpp"

namespace pairint::synth {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return nn::derive_seed(a, b); }

[[noreturn]] void unsatisfiable(const std::string& why) { throw Error(ErrorCode::UnsatisfiableSpec, why); }

struct Member {
  int index = 0;
  double w = 0, h = 0;
  double dx = 0, dy = 0;  // center offset from the entity anchor
};

// A group of interacting persons or a single loner; members move rigidly.
struct Entity {
  InteractionClass behaviour = InteractionClass::StandingTogether;
  std::vector<Member> members;
  double x = 0, y = 0;
  double vx = 0, vy = 0;
};

BBox member_box(const Member& m, double x, double y) {
  return {x + m.dx - 0.5 * m.w, y + m.dy - 0.5 * m.h, m.w, m.h};
}

double center_dist(const BBox& a, const BBox& b) { return std::hypot(a.cx() - b.cx(), a.cy() - b.cy()); }

std::pair<double, double> aspect_band(InteractionClass c, const ClassBands& bands) {
  switch (c) {
    case InteractionClass::WalkingTogether: return {bands.walk_aspect_min, bands.walk_aspect_max};
    case InteractionClass::StandingTogether: return {bands.stand_aspect_min, bands.stand_aspect_max};
    case InteractionClass::SittingTogether: return {bands.sit_aspect_min, bands.sit_aspect_max};
  }
  return {1.0, 1.0};
}

// Groups from the blueprint; each must be a clique of one class.
std::vector<std::pair<std::vector<int>, std::optional<InteractionClass>>> decompose(const SceneSpec& spec) {
  const int n = spec.n_persons;
  std::vector<int> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::map<std::pair<int, int>, InteractionClass> pairs;
  for (const auto& it : spec.blueprint) {
    if (it.a < 0 || it.b < 0 || it.a >= n || it.b >= n || it.a == it.b) {
      unsatisfiable("blueprint pair (" + std::to_string(it.a) + ", " + std::to_string(it.b) + ") is invalid");
    }
    if (!pairs.emplace(std::minmax(it.a, it.b), it.cls).second) unsatisfiable("blueprint lists a pair twice");
    parent[find(it.a)] = find(it.b);
  }
  std::map<int, std::vector<int>> comps;
  for (int i = 0; i < n; ++i) comps[find(i)].push_back(i);
  std::vector<std::pair<std::vector<int>, std::optional<InteractionClass>>> out;
  for (auto& [root, members] : comps) {
    std::optional<InteractionClass> cls;
    for (std::size_t i = 0; i < members.size(); ++i) {
      for (std::size_t j = i + 1; j < members.size(); ++j) {
        auto it = pairs.find({members[i], members[j]});
        if (it == pairs.end()) unsatisfiable("interaction groups must be cliques");
        if (cls && *cls != it->second) unsatisfiable("a group mixes interaction classes");
        cls = it->second;
      }
    }
    out.emplace_back(std::move(members), cls);
  }
  std::sort(out.begin(), out.end(), [](const auto& l, const auto& r) { return l.first.front() < r.first.front(); });
  return out;
}

// Sizes and relative layout of one entity; false when no layout is found.
bool layout_entity(Entity& e, const std::vector<int>& persons, const SceneSpec& spec, nn::Rng& rng) {
  const auto [rlo, rhi] = aspect_band(e.behaviour, spec.bands);
  const double w0 = nn::uniform(rng, spec.min_box_width, spec.max_box_width);
  e.members.clear();
  for (int p : persons) {
    Member m;
    m.index = p;
    m.w = std::clamp(w0 * nn::uniform(rng, 0.92, 1.08), spec.min_box_width, spec.max_box_width);
    // keep a little inside the band so the class signature is never ambiguous
    const double pad = 0.02 * (rhi - rlo);
    m.h = m.w * nn::uniform(rng, rlo + pad, rhi - pad);
    e.members.push_back(m);
  }
  if (e.members.size() == 1) return true;
  double mean_h = 0, mean_w = 0;
  for (const auto& m : e.members) {
    mean_h += m.h / e.members.size();
    mean_w += m.w / e.members.size();
  }
  const double rx = 0.5 * spec.bands.proximity * mean_h;
  for (int attempt = 0; attempt < 2000; ++attempt) {
    for (auto& m : e.members) {
      m.dx = nn::uniform(rng, -rx, rx);
      m.dy = nn::uniform(rng, -0.3 * mean_h, 0.3 * mean_h);
    }
    bool ok = true;
    for (std::size_t i = 0; ok && i < e.members.size(); ++i) {
      for (std::size_t j = i + 1; ok && j < e.members.size(); ++j) {
        const BBox a = member_box(e.members[i], 0, 0);
        const BBox b = member_box(e.members[j], 0, 0);
        const double d = center_dist(a, b);
        const double mh = 0.5 * (a.h + b.h);
        ok = d <= 0.95 * spec.bands.proximity * mh && d >= 0.8 * mean_w && iou(a, b) <= 0.15;
      }
    }
    if (ok) return true;
  }
  return false;
}

bool inside_image(const Entity& e, double x, double y, const SceneSpec& spec, bool& bad_x, bool& bad_y) {
  bad_x = bad_y = false;
  for (const auto& m : e.members) {
    const BBox b = member_box(m, x, y);
    if (b.x < spec.edge_margin || b.right() > spec.width - spec.edge_margin) bad_x = true;
    if (b.y < spec.edge_margin || b.bottom() > spec.height - spec.edge_margin) bad_y = true;
  }
  return !bad_x && !bad_y;
}

bool separated(const Entity& e, double x, double y, const Entity& o, const SceneSpec& spec) {
  for (const auto& m : e.members) {
    const BBox a = member_box(m, x, y);
    for (const auto& n : o.members) {
      const BBox b = member_box(n, o.x, o.y);
      // small safety factor over the nominal rule
      if (center_dist(a, b) <= 1.02 * spec.bands.separation * 0.5 * (a.h + b.h)) return false;
    }
  }
  return true;
}

void pick_velocity(Entity& e, const ClassBands& bands, nn::Rng& rng) {
  const double speed = e.behaviour == InteractionClass::WalkingTogether
                           ? nn::uniform(rng, bands.walk_speed_min, bands.walk_speed_max)
                           : nn::uniform(rng, 0.0, 0.75 * bands.static_speed_max);
  const double ang = nn::uniform(rng, -std::numbers::pi, std::numbers::pi);
  e.vx = speed * std::cos(ang);
  e.vy = speed * std::sin(ang);
}

// One attempt at a whole trajectory set; empty on failure.
std::vector<std::vector<BBox>> simulate(std::vector<Entity>& ents, const SceneSpec& spec, nn::Rng& rng) {
  // initial placement
  for (std::size_t i = 0; i < ents.size(); ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 500 && !placed; ++attempt) {
      const double x = nn::uniform(rng, 0, spec.width);
      const double y = nn::uniform(rng, 0, spec.height);
      bool bx, by;
      if (!inside_image(ents[i], x, y, spec, bx, by)) continue;
      placed = true;
      for (std::size_t j = 0; j < i && placed; ++j) placed = separated(ents[i], x, y, ents[j], spec);
      if (placed) {
        ents[i].x = x;
        ents[i].y = y;
      }
    }
    if (!placed) return {};
    pick_velocity(ents[i], spec.bands, rng);
  }

  std::vector<std::vector<BBox>> boxes(static_cast<std::size_t>(spec.frames),
                                       std::vector<BBox>(static_cast<std::size_t>(spec.n_persons)));
  auto record = [&](int t) {
    for (const auto& e : ents) {
      for (const auto& m : e.members) boxes[t][m.index] = member_box(m, e.x, e.y);
    }
  };
  record(0);
  for (int t = 1; t < spec.frames; ++t) {
    for (std::size_t i = 0; i < ents.size(); ++i) {
      Entity& e = ents[i];
      bool bx, by;
      if (!inside_image(e, e.x + e.vx, e.y + e.vy, spec, bx, by)) {
        if (bx) e.vx = -e.vx;
        if (by) e.vy = -e.vy;
      }
      auto clear = [&] {
        bool cx, cy;
        if (!inside_image(e, e.x + e.vx, e.y + e.vy, spec, cx, cy)) return false;
        for (std::size_t j = 0; j < ents.size(); ++j) {
          if (j != i && !separated(e, e.x + e.vx, e.y + e.vy, ents[j], spec)) return false;
        }
        return true;
      };
      if (!clear()) {
        e.vx = -e.vx;
        e.vy = -e.vy;
        if (!clear()) return {};
      }
      e.x += e.vx;
      e.y += e.vy;
    }
    record(t);
  }
  return boxes;
}

GrayImage make_background(int w, int h, double amplitude, std::uint64_t seed) {
  nn::Rng rng(seed);
  GrayImage img(w, h);
  std::vector<float> acc(static_cast<std::size_t>(w) * h, 0.0f);
  // two octaves of bilinear value noise
  const std::pair<int, double> octaves[] = {{24, 0.6}, {6, 0.4}};
  for (const auto& [cell, weight] : octaves) {
    const int gw = w / cell + 2;
    const int gh = h / cell + 2;
    std::vector<double> grid(static_cast<std::size_t>(gw) * gh);
    for (auto& g : grid) g = nn::uniform01(rng);
    for (int y = 0; y < h; ++y) {
      const double fy = static_cast<double>(y) / cell;
      const int y0 = static_cast<int>(fy);
      const double ty = fy - y0;
      for (int x = 0; x < w; ++x) {
        const double fx = static_cast<double>(x) / cell;
        const int x0 = static_cast<int>(fx);
        const double tx = fx - x0;
        const double v00 = grid[y0 * gw + x0], v10 = grid[y0 * gw + x0 + 1];
        const double v01 = grid[(y0 + 1) * gw + x0], v11 = grid[(y0 + 1) * gw + x0 + 1];
        const double v = (1 - ty) * ((1 - tx) * v00 + tx * v10) + ty * ((1 - tx) * v01 + tx * v11);
        acc[static_cast<std::size_t>(y) * w + x] += static_cast<float>(weight * v);
      }
    }
  }
  for (std::size_t i = 0; i < acc.size(); ++i) {
    const double v = 0.5 + 2.0 * amplitude * (acc[i] - 0.5);
    img.data[i] = static_cast<float>(std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0);
  }
  return img;
}

// Back to front: smaller bottom first, ties by track id.
std::vector<const PersonObs*> draw_order(const std::vector<PersonObs>& persons) {
  std::vector<const PersonObs*> order;
  for (const auto& p : persons) order.push_back(&p);
  std::stable_sort(order.begin(), order.end(), [](const PersonObs* l, const PersonObs* r) {
    if (l->bbox.bottom() != r->bbox.bottom()) return l->bbox.bottom() < r->bbox.bottom();
    return l->track_id < r->track_id;
  });
  return order;
}

}  // namespace

SceneRenderer::SceneRenderer(const SceneSequence& scene, const RenderSpec& spec, std::uint64_t scene_seed) {
  if (!scene.frames.empty()) {
    width_ = scene.frames.front().width;
    height_ = scene.frames.front().height;
  }
  const std::uint64_t seed = mix(spec.texture_seed, scene_seed);
  background_ = std::make_shared<const GrayImage>(make_background(width_, height_, spec.background_amplitude, seed));
  std::map<int, Texture> tex;
  for (const auto& f : scene.frames) {
    frames_.push_back(f.persons);
    for (const auto& p : f.persons) {
      if (tex.count(p.track_id)) continue;
      nn::Rng rng(mix(seed, static_cast<std::uint64_t>(p.track_id) + 1));
      Texture t;
      t.base = nn::uniform(rng, 0.3, 0.7);
      constexpr int kWaves = 5;
      for (int k = 0; k < kWaves; ++k) {
        const double wavelength = nn::uniform(rng, 5.0, 14.0);
        const double dir = nn::uniform(rng, 0.0, std::numbers::pi);
        const double f = 2.0 * std::numbers::pi / wavelength;
        t.waves.push_back({f * std::cos(dir), f * std::sin(dir), nn::uniform(rng, 0.0, 2.0 * std::numbers::pi),
                           spec.texture_contrast / kWaves * nn::uniform(rng, 0.6, 1.4)});
      }
      tex.emplace(p.track_id, std::move(t));
    }
  }
  textures_.assign(tex.begin(), tex.end());
}

const SceneRenderer::Texture& SceneRenderer::texture_of(int track_id) const {
  auto it = std::lower_bound(textures_.begin(), textures_.end(), track_id,
                             [](const auto& e, int id) { return e.first < id; });
  return it->second;
}

GrayImage SceneRenderer::render(std::size_t frame_index) const {
  GrayImage img = *background_;
  for (const PersonObs* p : draw_order(frames_.at(frame_index))) {
    const Texture& t = texture_of(p->track_id);
    const PixelRange r = box_pixels(p->bbox, width_, height_);
    for (int y = r.y0; y < r.y1; ++y) {
      const double v = y + 0.5 - p->bbox.y;
      for (int x = r.x0; x < r.x1; ++x) {
        const double u = x + 0.5 - p->bbox.x;
        double val = t.base;
        for (const auto& wv : t.waves) val += wv.amp * std::sin(wv.kx * u + wv.ky * v + wv.phase);
        img.at(x, y) = static_cast<float>(std::round(std::clamp(val, 0.0, 1.0) * 255.0) / 255.0);
      }
    }
  }
  return img;
}

std::vector<GrayImage> render_frames(const SceneSequence& scene, const RenderSpec& spec, std::uint64_t scene_seed) {
  const SceneRenderer r(scene, spec, scene_seed);
  std::vector<GrayImage> out;
  out.reserve(r.frame_count());
  for (std::size_t i = 0; i < r.frame_count(); ++i) out.push_back(r.render(i));
  return out;
}

FlowField ground_truth_flow(const SceneSequence& scene, std::size_t t) {
  if (t + 1 >= scene.frames.size()) {
    throw Error(ErrorCode::InvalidParams, "ground truth flow needs frames t and t + 1");
  }
  const Frame& f0 = scene.frames[t];
  const Frame& f1 = scene.frames[t + 1];
  FlowField flow(f0.width, f0.height);
  for (const PersonObs* p : draw_order(f0.persons)) {
    const PersonObs* q = f1.find(p->track_id);
    const float ux = q ? static_cast<float>(q->bbox.x - p->bbox.x) : 0.0f;
    const float uy = q ? static_cast<float>(q->bbox.y - p->bbox.y) : 0.0f;
    const PixelRange r = box_pixels(p->bbox, flow.width, flow.height);
    for (int y = r.y0; y < r.y1; ++y) {
      for (int x = r.x0; x < r.x1; ++x) {
        flow.fx[flow.index(x, y)] = ux;
        flow.fy[flow.index(x, y)] = uy;
      }
    }
  }
  return flow;
}

SceneSequence gen_scene(const SceneSpec& spec, const RenderSpec& render) {
  if (spec.n_persons < 0 || spec.frames < 1 || spec.width <= 0 || spec.height <= 0) {
    unsatisfiable("scene needs a positive frame count and image size");
  }
  if (spec.min_box_width <= 0 || spec.max_box_width < spec.min_box_width) unsatisfiable("invalid box width range");
  const auto groups = decompose(spec);
  nn::Rng rng(mix(spec.seed, 0x5ce9e));

  std::vector<std::vector<BBox>> boxes;
  std::vector<Entity> ents;
  for (int attempt = 0; attempt < spec.max_attempts && boxes.empty(); ++attempt) {
    ents.clear();
    for (const auto& [persons, cls] : groups) {
      Entity e;
      e.behaviour = cls ? *cls : static_cast<InteractionClass>(nn::uniform_index(rng, kNumInteractionClasses));
      if (!layout_entity(e, persons, spec, rng)) unsatisfiable("group members cannot be placed within proximity");
      ents.push_back(std::move(e));
    }
    boxes = simulate(ents, spec, rng);
  }
  if (boxes.empty() && spec.frames > 0 && spec.n_persons > 0) {
    unsatisfiable("no trajectory set satisfies the spacing rules after " + std::to_string(spec.max_attempts) +
                  " attempts");
  }

  SceneSequence seq;
  seq.name = spec.name;
  seq.fps = spec.fps;
  std::vector<PairLabel> labels;
  for (const auto& it : spec.blueprint) labels.push_back({std::min(it.a, it.b) + 1, std::max(it.a, it.b) + 1, it.cls});
  std::sort(labels.begin(), labels.end(),
            [](const PairLabel& l, const PairLabel& r) { return std::tie(l.a, l.b) < std::tie(r.a, r.b); });
  for (int t = 0; t < spec.frames; ++t) {
    Frame f;
    f.frame_id = t;
    char name[32];
    std::snprintf(name, sizeof name, "frames/%06d.png", t);
    f.image = name;
    f.width = spec.width;
    f.height = spec.height;
    for (int i = 0; i < spec.n_persons; ++i) f.persons.push_back({i + 1, boxes[t][i], false, t});
    seq.frames.push_back(std::move(f));
    if (!labels.empty()) seq.labels[t] = labels;
  }
  auto renderer = std::make_shared<const SceneRenderer>(seq, render, spec.seed);
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    seq.frames[t].render = [renderer, t] { return renderer->render(t); };
  }
  return seq;
}

SceneSpec random_scene_spec(nn::Rng& rng, const RandomSceneOptions& opts) {
  SceneSpec spec;
  spec.frames = opts.frames;
  spec.width = opts.width;
  spec.height = opts.height;
  spec.seed = rng();
  spec.n_persons = opts.min_persons + static_cast<int>(nn::uniform_index(
                                          rng, static_cast<std::uint64_t>(opts.max_persons - opts.min_persons + 1)));
  std::vector<int> order(static_cast<std::size_t>(spec.n_persons));
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[nn::uniform_index(rng, i)]);

  std::size_t pos = 0;
  int slots = opts.max_entities;
  while (pos < order.size()) {
    const std::size_t left = order.size() - pos;
    // sizes 1..3 that still leave the rest coverable by the remaining slots
    const double weight[] = {0.25, 0.45, 0.30};
    double total = 0;
    std::array<bool, 3> ok{};
    for (std::size_t s = 1; s <= 3; ++s) {
      ok[s - 1] = s <= left && static_cast<int>((left - s + 2) / 3) <= slots - 1;
      if (ok[s - 1]) total += weight[s - 1];
    }
    if (total == 0) unsatisfiable("too many persons for the entity limit");
    double pick = nn::uniform01(rng) * total;
    std::size_t size = 0;
    for (std::size_t s = 1; s <= 3 && size == 0; ++s) {
      if (!ok[s - 1]) continue;
      if (pick < weight[s - 1] || s == 3) size = s;
      pick -= weight[s - 1];
    }
    if (size == 0) size = ok[1] ? 2 : 1;
    const auto cls = static_cast<InteractionClass>(nn::uniform_index(rng, kNumInteractionClasses));
    for (std::size_t i = 0; i < size; ++i) {
      for (std::size_t j = i + 1; j < size; ++j) spec.blueprint.push_back({order[pos + i], order[pos + j], cls});
    }
    pos += size;
    --slots;
  }
  return spec;
}

Dataset generate_corpus(const CorpusSpec& spec) {
  Dataset out;
  for (int s = 0; s < spec.scenes; ++s) {
    nn::Rng rng(mix(spec.seed, static_cast<std::uint64_t>(s)));
    char name[64];
    std::snprintf(name, sizeof name, "%s_%03d", spec.prefix.c_str(), s);
    for (int attempt = 0;; ++attempt) {
      SceneSpec scene = random_scene_spec(rng, spec.scene);
      scene.name = name;
      try {
        out.push_back(gen_scene(scene, {}));
        break;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::UnsatisfiableSpec || attempt >= 20) throw;
      }
    }
  }
  return out;
}

void write_corpus(const Dataset& corpus, const std::filesystem::path& dir, bool with_flow) {
  namespace fs = std::filesystem;
  for (const auto& scene : corpus) {
    const fs::path root = dir / scene.name;
    fs::create_directories(root / "frames");
    if (with_flow) fs::create_directories(root / "flow");
    for (std::size_t t = 0; t < scene.frames.size(); ++t) {
      const Frame& f = scene.frames[t];
      write_png(root / f.image, load_frame_image(scene, f));
      if (with_flow && t + 1 < scene.frames.size()) {
        char name[32];
        std::snprintf(name, sizeof name, "flow/%06d.flo", f.frame_id);
        write_flow(root / name, ground_truth_flow(scene, t));
      }
    }
    save_annotations(scene, root / "annotations.jsonl");
  }
}

}  // namespace pairint::synth
