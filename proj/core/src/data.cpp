#include "pairint/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "pairint/error.hpp"

namespace pairint {

using nlohmann::json;

double iou(const BBox& a, const BBox& b) noexcept {
  const double ix = std::max(0.0, std::min(a.right(), b.right()) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

const PersonObs* Frame::find(int track_id) const noexcept {
  for (const auto& p : persons) {
    if (p.track_id == track_id) return &p;
  }
  return nullptr;
}

std::string_view label_name(InteractionClass c) noexcept {
  switch (c) {
    case InteractionClass::WalkingTogether: return "walking_together";
    case InteractionClass::StandingTogether: return "standing_together";
    case InteractionClass::SittingTogether: return "sitting_together";
  }
  return "unknown";
}

std::optional<InteractionClass> parse_label(std::string_view name) noexcept {
  if (name == "walking_together") return InteractionClass::WalkingTogether;
  if (name == "standing_together") return InteractionClass::StandingTogether;
  if (name == "sitting_together") return InteractionClass::SittingTogether;
  return std::nullopt;
}

std::optional<InteractionClass> SceneSequence::label_of(int frame_id, int a, int b) const {
  auto it = labels.find(frame_id);
  if (it == labels.end()) return std::nullopt;
  const int lo = std::min(a, b);
  const int hi = std::max(a, b);
  for (const auto& l : it->second) {
    if (l.a == lo && l.b == hi) return l.label;
  }
  return std::nullopt;
}

namespace {

[[noreturn]] void malformed(const std::string& source, std::size_t line, const std::string& why) {
  throw Error(ErrorCode::MalformedRecord, source + ":" + std::to_string(line) + ": " + why);
}

template <typename T>
T required(const json& obj, const char* key, const std::string& source, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) malformed(source, line, std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    malformed(source, line, std::string("field '") + key + "' has the wrong type");
  }
}

void parse_record(const json& rec, SceneSequence& seq, const std::string& source, std::size_t line) {
  if (!rec.is_object()) malformed(source, line, "record is not an object");
  Frame frame;
  frame.frame_id = required<int>(rec, "frame_id", source, line);
  frame.width = required<int>(rec, "width", source, line);
  frame.height = required<int>(rec, "height", source, line);
  if (frame.width <= 0 || frame.height <= 0) malformed(source, line, "non-positive image size");
  if (auto it = rec.find("image"); it != rec.end() && !it->is_null()) {
    if (!it->is_string()) malformed(source, line, "field 'image' must be a string");
    frame.image = it->get<std::string>();
  }
  if (auto it = rec.find("fps"); it != rec.end() && it->is_number() && seq.frames.empty()) {
    seq.fps = it->get<double>();
  }
  if (!seq.frames.empty() && frame.frame_id <= seq.frames.back().frame_id) {
    malformed(source, line, "frame_id " + std::to_string(frame.frame_id) + " is not increasing");
  }

  const json persons = rec.contains("persons") ? rec.at("persons") : json::array();
  if (!persons.is_array()) malformed(source, line, "field 'persons' must be an array");
  std::set<int> ids;
  for (const auto& p : persons) {
    if (!p.is_object()) malformed(source, line, "person entry is not an object");
    PersonObs obs;
    obs.frame_id = frame.frame_id;
    obs.track_id = required<int>(p, "id", source, line);
    const auto box = required<std::vector<double>>(p, "bbox", source, line);
    if (box.size() != 4) malformed(source, line, "bbox must have 4 elements");
    for (double v : box) {
      if (!std::isfinite(v)) malformed(source, line, "non-finite bbox coordinate");
    }
    if (box[2] <= 0.0 || box[3] <= 0.0) {
      malformed(source, line, "bbox of track " + std::to_string(obs.track_id) + " has non-positive size");
    }
    // Clip to the image so that x + w <= width and y + h <= height hold downstream.
    const double x0 = std::clamp(box[0], 0.0, static_cast<double>(frame.width));
    const double y0 = std::clamp(box[1], 0.0, static_cast<double>(frame.height));
    const double x1 = std::clamp(box[0] + box[2], 0.0, static_cast<double>(frame.width));
    const double y1 = std::clamp(box[1] + box[3], 0.0, static_cast<double>(frame.height));
    if (x1 - x0 <= 0.0 || y1 - y0 <= 0.0) {
      malformed(source, line, "bbox of track " + std::to_string(obs.track_id) + " lies outside the image");
    }
    obs.bbox = {x0, y0, x1 - x0, y1 - y0};
    if (auto it = p.find("occluded"); it != p.end() && !it->is_null()) {
      if (!it->is_boolean()) malformed(source, line, "field 'occluded' must be a boolean");
      obs.occluded = it->get<bool>();
    }
    if (!ids.insert(obs.track_id).second) {
      malformed(source, line, "duplicate track id " + std::to_string(obs.track_id));
    }
    frame.persons.push_back(obs);
  }

  std::vector<PairLabel> labels;
  if (auto it = rec.find("interactions"); it != rec.end() && !it->is_null()) {
    if (!it->is_array()) malformed(source, line, "field 'interactions' must be an array");
    std::set<std::pair<int, int>> seen;
    for (const auto& r : *it) {
      if (!r.is_object()) malformed(source, line, "interaction entry is not an object");
      const int a = required<int>(r, "a", source, line);
      const int b = required<int>(r, "b", source, line);
      if (a == b) malformed(source, line, "interaction pairs a track with itself");
      PairLabel pl{std::min(a, b), std::max(a, b), std::nullopt};
      if (auto lab = r.find("label"); lab != r.end() && !lab->is_null()) {
        if (!lab->is_string()) malformed(source, line, "interaction label must be a string");
        const auto name = lab->get<std::string>();
        pl.label = parse_label(name);
        if (!pl.label) {
          throw Error(ErrorCode::UnknownLabel, source + ":" + std::to_string(line) + ": '" + name + "'");
        }
      }
      for (int id : {a, b}) {
        if (!ids.count(id)) {
          throw Error(ErrorCode::DanglingTrackId, source + ":" + std::to_string(line) + ": track " +
                                                      std::to_string(id) + " is not in frame " +
                                                      std::to_string(frame.frame_id));
        }
      }
      if (!seen.insert({pl.a, pl.b}).second) malformed(source, line, "duplicate interaction pair");
      labels.push_back(pl);
    }
  }
  std::sort(labels.begin(), labels.end(),
            [](const PairLabel& l, const PairLabel& r) { return std::tie(l.a, l.b) < std::tie(r.a, r.b); });
  if (!labels.empty()) seq.labels[frame.frame_id] = std::move(labels);
  seq.frames.push_back(std::move(frame));
}

}  // namespace

SceneSequence parse_annotations(std::string_view text, const std::string& source) {
  SceneSequence seq;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      malformed(source, line_no, e.what());
    }
    parse_record(rec, seq, source, line_no);
    if (end == text.size()) break;
  }
  return seq;
}

SceneSequence load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  SceneSequence seq = parse_annotations(buf.str(), path.string());
  seq.base_dir = path.parent_path();
  seq.name = path.parent_path().filename().string();
  if (seq.name.empty() || path.filename() != "annotations.jsonl") seq.name = path.stem().string();
  return seq;
}

std::string format_annotations(const SceneSequence& seq) {
  std::string out;
  for (const auto& f : seq.frames) {
    json rec;
    rec["frame_id"] = f.frame_id;
    rec["image"] = f.image;
    rec["width"] = f.width;
    rec["height"] = f.height;
    rec["fps"] = seq.fps;
    json persons = json::array();
    for (const auto& p : f.persons) {
      json jp;
      jp["id"] = p.track_id;
      jp["bbox"] = {p.bbox.x, p.bbox.y, p.bbox.w, p.bbox.h};
      if (p.occluded) jp["occluded"] = *p.occluded;
      persons.push_back(std::move(jp));
    }
    rec["persons"] = std::move(persons);
    json inter = json::array();
    if (auto it = seq.labels.find(f.frame_id); it != seq.labels.end()) {
      for (const auto& l : it->second) {
        json ji;
        ji["a"] = l.a;
        ji["b"] = l.b;
        ji["label"] = l.label ? json(std::string(label_name(*l.label))) : json(nullptr);
        inter.push_back(std::move(ji));
      }
    }
    rec["interactions"] = std::move(inter);
    out += rec.dump();
    out += '\n';
  }
  return out;
}

void save_annotations(const SceneSequence& seq, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << format_annotations(seq);
}

Dataset load_dataset(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  if (!fs::exists(path)) throw Error(ErrorCode::Io, "dataset path does not exist: " + path.string());
  std::vector<fs::path> files;
  if (fs::is_regular_file(path)) {
    files.push_back(path);
  } else {
    for (const auto& entry : fs::recursive_directory_iterator(path)) {
      if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  }
  Dataset out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(load_annotations(f));
  return out;
}

Frame filter_observations(const Frame& frame, double border_margin, bool drop_occluded, double occlusion_iou) {
  Frame out = frame;
  out.persons.clear();
  for (const auto& p : frame.persons) {
    const BBox& b = p.bbox;
    if (b.x < border_margin || b.y < border_margin || b.right() > frame.width - border_margin ||
        b.bottom() > frame.height - border_margin) {
      continue;
    }
    if (drop_occluded) {
      bool occluded = false;
      if (p.occluded) {
        occluded = *p.occluded;
      } else {
        for (const auto& q : frame.persons) {
          if (q.track_id != p.track_id && q.bbox.bottom() > b.bottom() && iou(q.bbox, b) > occlusion_iou) {
            occluded = true;
            break;
          }
        }
      }
      if (occluded) continue;
    }
    out.persons.push_back(p);
  }
  return out;
}

SceneSequence filter_sequence(const SceneSequence& seq, const FilterConfig& cfg) {
  SceneSequence out = seq;
  out.labels.clear();
  for (auto& f : out.frames) {
    f = filter_observations(f, cfg.border_margin, cfg.drop_occluded, cfg.occlusion_iou);
    auto it = seq.labels.find(f.frame_id);
    if (it == seq.labels.end()) continue;
    std::vector<PairLabel> kept;
    for (const auto& l : it->second) {
      if (f.find(l.a) && f.find(l.b)) kept.push_back(l);
    }
    if (!kept.empty()) out.labels[f.frame_id] = std::move(kept);
  }
  return out;
}

std::vector<std::size_t> sampled_indices(std::size_t frame_count, int interval) {
  if (interval < 1) throw Error(ErrorCode::InvalidInterval, "interval must be >= 1, got " + std::to_string(interval));
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < frame_count; i += static_cast<std::size_t>(interval)) idx.push_back(i);
  return idx;
}

SceneSequence sample_frames(const SceneSequence& seq, int interval) {
  SceneSequence out = seq;
  out.frames.clear();
  out.labels.clear();
  for (std::size_t i : sampled_indices(seq.frames.size(), interval)) {
    const Frame& f = seq.frames[i];
    out.frames.push_back(f);
    if (auto it = seq.labels.find(f.frame_id); it != seq.labels.end()) out.labels.insert(*it);
  }
  return out;
}

std::vector<PersonPair> enumerate_pairs(const Frame& frame) {
  std::vector<PersonObs> persons = frame.persons;
  std::sort(persons.begin(), persons.end(),
            [](const PersonObs& l, const PersonObs& r) { return l.track_id < r.track_id; });
  std::vector<PersonPair> pairs;
  pairs.reserve(persons.size() * (persons.size() > 0 ? persons.size() - 1 : 0) / 2);
  for (std::size_t i = 0; i < persons.size(); ++i) {
    for (std::size_t j = i + 1; j < persons.size(); ++j) pairs.emplace_back(persons[i], persons[j]);
  }
  return pairs;
}

GrayImage load_frame_image(const SceneSequence& seq, const Frame& frame) {
  if (frame.pixels) return *frame.pixels;
  if (frame.render) return frame.render();
  if (frame.image.empty()) {
    throw Error(ErrorCode::MissingFrameImage, "frame " + std::to_string(frame.frame_id) + " has no image");
  }
  GrayImage img = read_gray_image(seq.base_dir / frame.image);
  if (img.width != frame.width || img.height != frame.height) {
    throw Error(ErrorCode::DimensionMismatch, "image " + frame.image + " does not match annotated size");
  }
  return img;
}

}  // namespace pairint
