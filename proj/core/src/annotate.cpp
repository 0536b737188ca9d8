#include "pairint/annotate.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>

#include "pairint/error.hpp"

namespace pairint {

namespace {

struct Glyph {
  char c;
  std::array<std::uint8_t, 7> rows;
};

// 5 bits per row, most significant bit on the left
constexpr Glyph kFont[] = {
    {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}}, {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
    {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}}, {'D', {0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E}},
    {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}}, {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
    {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}}, {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}}, {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
    {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}}, {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
    {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}}, {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
    {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
    {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}}, {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
    {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}}, {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
    {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
    {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}}, {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
    {'Y', {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04}}, {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}}, {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}}, {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}}, {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}}, {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}}, {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}}, {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}},
    {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
};

const Glyph* glyph(char c) {
  const char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (const auto& g : kFont) {
    if (g.c == u) return &g;
  }
  return nullptr;
}

void put(RgbImage& img, int x, int y, Rgb c) {
  if (img.contains(x, y)) img.set(x, y, c);
}

}  // namespace

Rgb class_color(std::optional<InteractionClass> c) noexcept {
  if (!c) return {170, 170, 170};
  switch (*c) {
    case InteractionClass::WalkingTogether: return {230, 60, 60};
    case InteractionClass::StandingTogether: return {60, 180, 75};
    case InteractionClass::SittingTogether: return {0, 130, 230};
  }
  return {255, 255, 255};
}

void draw_text(RgbImage& img, int x, int y, std::string_view text, Rgb color, int scale) {
  for (char ch : text) {
    if (const Glyph* g = glyph(ch)) {
      for (int r = 0; r < 7; ++r) {
        for (int c = 0; c < 5; ++c) {
          if (!(g->rows[r] >> (4 - c) & 1)) continue;
          for (int dy = 0; dy < scale; ++dy) {
            for (int dx = 0; dx < scale; ++dx) put(img, x + c * scale + dx, y + r * scale + dy, color);
          }
        }
      }
    }
    x += 6 * scale;
  }
}

void draw_line(RgbImage& img, int x0, int y0, int x1, int y1, Rgb color) {
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    put(img, x0, y0, color);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void draw_rect(RgbImage& img, const BBox& box, Rgb color, int thickness) {
  const int x0 = static_cast<int>(std::lround(box.x)), y0 = static_cast<int>(std::lround(box.y));
  const int x1 = static_cast<int>(std::lround(box.right())) - 1, y1 = static_cast<int>(std::lround(box.bottom())) - 1;
  for (int t = 0; t < thickness; ++t) {
    for (int x = x0; x <= x1; ++x) {
      put(img, x, y0 + t, color);
      put(img, x, y1 - t, color);
    }
    for (int y = y0; y <= y1; ++y) {
      put(img, x0 + t, y, color);
      put(img, x1 - t, y, color);
    }
  }
}

RgbImage annotate_frame(const GrayImage& gray, const Frame& frame, std::span<const DrawnEdge> edges) {
  RgbImage img = to_rgb(gray);
  std::map<int, std::optional<InteractionClass>> person_class;
  for (const auto& e : edges) {
    for (int id : {e.a, e.b}) {
      auto [it, fresh] = person_class.emplace(id, e.label);
      if (!fresh && !it->second) it->second = e.label;
    }
  }
  for (const auto& p : frame.persons) {
    auto it = person_class.find(p.track_id);
    const Rgb c = it != person_class.end() && it->second ? class_color(it->second) : class_color(std::nullopt);
    draw_rect(img, p.bbox, c);
    draw_text(img, static_cast<int>(p.bbox.x), static_cast<int>(p.bbox.y) - 9, std::to_string(p.track_id), c);
  }
  for (const auto& e : edges) {
    const PersonObs* a = frame.find(e.a);
    const PersonObs* b = frame.find(e.b);
    if (!a || !b) continue;
    const Rgb c = class_color(e.label);
    const int ax = static_cast<int>(a->bbox.cx()), ay = static_cast<int>(a->bbox.cy());
    const int bx = static_cast<int>(b->bbox.cx()), by = static_cast<int>(b->bbox.cy());
    draw_line(img, ax, ay, bx, by, c);
    const std::string text = e.label ? std::string(label_name(*e.label)) : "interacting";
    const int tx = (ax + bx) / 2 - static_cast<int>(text.size()) * 3;
    const int ty = (ay + by) / 2 - 12;
    for (int y = ty - 1; y < ty + 8; ++y) {
      for (int x = tx - 1; x < tx + static_cast<int>(text.size()) * 6; ++x) put(img, x, y, {0, 0, 0});
    }
    draw_text(img, tx, ty, text, c);
  }
  return img;
}

namespace {

using FrameKey = std::pair<std::string, int>;

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedRecord, path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

std::size_t annotate_dataset(const Dataset& data, const std::filesystem::path& inference_dir,
                             const std::filesystem::path& out_dir) {
  std::set<FrameKey> frames;
  std::map<FrameKey, std::vector<DrawnEdge>> edges;
  try {
    for (const auto& j : read_jsonl(inference_dir / "proposals.jsonl")) {
      frames.insert({j.value("scene", std::string()), j.at("frame_id").get<int>()});
    }
    const auto cls_path = inference_dir / "classifications.jsonl";
    if (std::filesystem::exists(cls_path)) {
      for (const auto& j : read_jsonl(cls_path)) {
        const FrameKey key{j.value("scene", std::string()), j.at("frame_id").get<int>()};
        edges[key].push_back({j.at("a").get<int>(), j.at("b").get<int>(),
                              parse_label(j.at("label").get<std::string>())});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("inference output: ") + e.what());
  }

  std::size_t written = 0;
  for (const auto& seq : data) {
    for (const auto& frame : seq.frames) {
      FrameKey key{seq.name, frame.frame_id};
      if (!frames.count(key)) {
        key.first.clear();
        if (data.size() != 1 || !frames.count(key)) continue;
      }
      const GrayImage img = load_frame_image(seq, frame);
      const auto it = edges.find(key);
      const std::span<const DrawnEdge> fe = it == edges.end() ? std::span<const DrawnEdge>{} : it->second;
      std::filesystem::create_directories(out_dir / seq.name);
      char name[32];
      std::snprintf(name, sizeof name, "%06d.png", frame.frame_id);
      write_png(out_dir / seq.name / name, annotate_frame(img, frame, fe));
      ++written;
    }
  }
  return written;
}

}  // namespace pairint
