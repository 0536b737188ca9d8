#include "pairint/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <set>

#include "pairint/error.hpp"

namespace pairint::oracle {

FlowField brute_force_flow(const GrayImage& prev, const GrayImage& next, int radius) {
  if (prev.width != next.width || prev.height != next.height) {
    throw Error(ErrorCode::DimensionMismatch, "frames differ in size");
  }
  if (radius < 0) throw Error(ErrorCode::InvalidParams, "radius must be non-negative");
  const int w = prev.width;
  const int h = prev.height;
  std::vector<std::pair<int, int>> cands;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) cands.emplace_back(dx, dy);
  }
  // visiting order encodes the tie-break; strict improvement keeps the first
  std::sort(cands.begin(), cands.end(), [](auto l, auto r) {
    const int ml = l.first * l.first + l.second * l.second;
    const int mr = r.first * r.first + r.second * r.second;
    if (ml != mr) return ml < mr;
    return l < r;
  });
  FlowField out(w, h);
  for (int by = 0; by < h; by += kBlockSize) {
    for (int bx = 0; bx < w; bx += kBlockSize) {
      const int ex = std::min(bx + kBlockSize, w);
      const int ey = std::min(by + kBlockSize, h);
      double best = std::numeric_limits<double>::infinity();
      std::pair<int, int> arg{0, 0};
      for (auto [dx, dy] : cands) {
        if (bx + dx < 0 || by + dy < 0 || ex + dx > w || ey + dy > h) continue;
        double ssd = 0;
        for (int y = by; y < ey; ++y) {
          for (int x = bx; x < ex; ++x) {
            const double diff = static_cast<double>(next.at(x + dx, y + dy)) - prev.at(x, y);
            ssd += diff * diff;
          }
        }
        if (ssd < best) {
          best = ssd;
          arg = {dx, dy};
        }
      }
      for (int y = by; y < ey; ++y) {
        for (int x = bx; x < ex; ++x) {
          out.fx[out.index(x, y)] = static_cast<float>(arg.first);
          out.fy[out.index(x, y)] = static_cast<float>(arg.second);
        }
      }
    }
  }
  return out;
}

namespace {

struct Moments {
  double mean = 0, sd = 0, abs_x = 0, abs_y = 0, mean_cos = 0, mean_sin = 0;
};

// Pixel (x, y) belongs to a box when its center lies in [x, x + w) x [y, y + h).
bool covers(const BBox& b, int x, int y) {
  const double px = x + 0.5;
  const double py = y + 0.5;
  return px >= b.x && px < b.x + b.w && py >= b.y && py < b.y + b.h;
}

Moments moments(const FlowField& flow, std::span<const BBox> boxes, int ring) {
  std::vector<double> mag, ax, ay, ang;
  for (int y = ring; y < flow.height - ring; ++y) {
    for (int x = ring; x < flow.width - ring; ++x) {
      bool in = false;
      for (const auto& b : boxes) in = in || covers(b, x, y);
      if (!in) continue;
      const double u = flow.fx[static_cast<std::size_t>(y) * flow.width + x];
      const double v = flow.fy[static_cast<std::size_t>(y) * flow.width + x];
      const double m = std::sqrt(u * u + v * v);
      mag.push_back(m);
      ax.push_back(std::abs(u));
      ay.push_back(std::abs(v));
      ang.push_back(m < 1e-6 ? 0.0 : std::atan2(v, u));
    }
  }
  if (mag.empty()) throw Error(ErrorCode::EmptyMask, "no pixels under the boxes");
  const double n = static_cast<double>(mag.size());
  Moments r;
  for (std::size_t i = 0; i < mag.size(); ++i) {
    r.mean += mag[i];
    r.abs_x += ax[i];
    r.abs_y += ay[i];
    r.mean_cos += std::cos(ang[i]);
    r.mean_sin += std::sin(ang[i]);
  }
  r.mean /= n;
  r.abs_x /= n;
  r.abs_y /= n;
  r.mean_cos /= n;
  r.mean_sin /= n;
  double var = 0;
  for (double m : mag) var += (m - r.mean) * (m - r.mean);
  r.sd = std::sqrt(var / n);
  return r;
}

double vh(const Moments& m) {
  const double den = m.abs_x > 1e-6 ? m.abs_x : 1e-6;
  return std::min(m.abs_y / den, 50.0);
}

double sim(double p, double q) { return 1.0 - std::abs(p - q) / (p + q + 1e-6); }

}  // namespace

std::array<double, 10> oracle_features(const BBox& a, const BBox& b, const FlowField& flow, int image_width,
                                       int image_height, int ring) {
  for (const BBox* box : {&a, &b}) {
    if (!(box->w > 0) || !(box->h > 0)) throw Error(ErrorCode::DegenerateBox, "box has non-positive size");
  }
  (void)image_width;
  const double ax = a.x + a.w / 2, ay = a.y + a.h / 2;
  const double bx = b.x + b.w / 2, by = b.y + b.h / 2;
  const double d = std::sqrt((ax - bx) * (ax - bx) + (ay - by) * (ay - by));
  const double hbar = (a.h + b.h) / 2;
  const double wbar = (a.w + b.w) / 2;
  const double abar = (a.w * a.h + b.w * b.h) / 2;

  std::array<double, 10> f{};
  f[0] = d / hbar;
  f[1] = d / wbar;
  f[2] = (a.h / a.w + b.h / b.w) / 2;
  f[3] = hbar / image_height;
  f[4] = ((a.y + a.h) + (b.y + b.h)) / 2 / image_height;

  const BBox both[] = {a, b};
  const Moments u = moments(flow, both, ring);
  f[5] = u.mean / abar;
  f[6] = u.sd / abar;
  f[7] = vh(u);
  f[8] = std::min(std::hypot(u.mean_cos, u.mean_sin), 1.0 + 1e-9);

  const Moments pa = moments(flow, std::span<const BBox>(&a, 1), ring);
  const Moments pb = moments(flow, std::span<const BBox>(&b, 1), ring);
  const double dir = std::atan2(pa.mean_sin, pa.mean_cos) - std::atan2(pb.mean_sin, pb.mean_cos);
  f[9] = (sim(pa.mean, pb.mean) + sim(pa.sd, pb.sd) + sim(a.h / a.w, b.h / b.w) + (1 + std::cos(dir)) / 2) / 4;
  return f;
}

std::vector<std::vector<int>> oracle_components(std::span<const std::pair<int, int>> edges, std::span<const int> nodes) {
  std::map<int, std::vector<int>> adj;
  for (int n : nodes) adj[n];
  for (auto [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::set<int> seen;
  std::vector<std::vector<int>> out;
  for (const auto& [start, _] : adj) {
    if (seen.count(start)) continue;
    std::vector<int> comp;
    std::deque<int> queue{start};
    seen.insert(start);
    while (!queue.empty()) {
      const int v = queue.front();
      queue.pop_front();
      comp.push_back(v);
      for (int w : adj[v]) {
        if (seen.insert(w).second) queue.push_back(w);
      }
    }
    std::sort(comp.begin(), comp.end());
    out.push_back(std::move(comp));
  }
  return out;
}

}  // namespace pairint::oracle
