#pragma once

// Test-side oracles, implemented independently of the library code paths they
// check. Brute force over clever: these trade speed for obviousness.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "bevbench/detect.hpp"
#include "bevbench/scene.hpp"

namespace oracles {

using bevbench::Vec2;
using bevbench::Vec3;

// Direct (non-separable) truncated-Gaussian 2D convolution with zero padding.
inline std::vector<double> conv2d_gaussian(const std::vector<double>& in, int h, int w,
                                           int c, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel((2 * radius + 1) * (2 * radius + 1));
  double norm = 0.0;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) {
      const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      kernel[(dy + radius) * (2 * radius + 1) + (dx + radius)] = v;
      norm += v;
    }
  for (double& v : kernel) v /= norm;

  std::vector<double> out(in.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) {
        double acc = 0.0;
        for (int dy = -radius; dy <= radius; ++dy)
          for (int dx = -radius; dx <= radius; ++dx) {
            const int sy = y + dy, sx = x + dx;
            if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
            acc += kernel[(dy + radius) * (2 * radius + 1) + (dx + radius)] *
                   in[(static_cast<size_t>(sy) * w + sx) * c + k];
          }
        out[(static_cast<size_t>(y) * w + x) * c + k] = acc;
      }
  return out;
}

// Area of the intersection of two convex polygons (Sutherland-Hodgman clip
// followed by the shoelace formula).
inline double convex_intersection_area(std::vector<Vec2> subject,
                                       const std::vector<Vec2>& clip) {
  for (size_t e = 0; e < clip.size(); ++e) {
    const Vec2 a = clip[e], b = clip[(e + 1) % clip.size()];
    const Vec2 edge = b - a;
    std::vector<Vec2> next;
    const auto inside = [&](const Vec2& p) {
      return edge.x() * (p.y() - a.y()) - edge.y() * (p.x() - a.x()) >= 0.0;
    };
    for (size_t i = 0; i < subject.size(); ++i) {
      const Vec2 p = subject[i], q = subject[(i + 1) % subject.size()];
      const bool pin = inside(p), qin = inside(q);
      if (pin) next.push_back(p);
      if (pin != qin) {
        const double denom = edge.x() * (q.y() - p.y()) - edge.y() * (q.x() - p.x());
        if (denom != 0.0) {
          const double t =
              (edge.x() * (a.y() - p.y()) - edge.y() * (a.x() - p.x())) / -denom;
          next.push_back(p + t * (q - p));
        }
      }
    }
    subject = std::move(next);
    if (subject.empty()) return 0.0;
  }
  double area2 = 0.0;
  for (size_t i = 0; i < subject.size(); ++i) {
    const Vec2 p = subject[i], q = subject[(i + 1) % subject.size()];
    area2 += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * std::abs(area2);
}

// Distance from a point to the surface of an oriented box.
inline double distance_to_box_surface(const Vec3& p, const bevbench::scene::ObjectBox& box) {
  const bevbench::Mat3 R = bevbench::rot_z(box.yaw);
  const Vec3 local = R.transpose() * (p - box.center);
  const Vec3 half = 0.5 * box.size;
  const Vec3 d = local.cwiseAbs() - half;
  if ((d.array() <= 0.0).all()) return -d.maxCoeff();  // inside: depth to nearest face
  Vec3 outside = d.cwiseMax(0.0);
  return outside.norm();
}

// ---------------------------------------------------------------------------
// Metric oracles

struct OracleDet {
  double x, y;
  Vec3 size;
  double yaw;
  Vec2 velocity;
  std::string cls;
  double score;
};

struct OracleGt {
  double x, y;
  Vec3 size;
  double yaw;
  Vec2 velocity;
  std::string cls;
};

inline OracleDet to_oracle(const bevbench::detect::Detection& d) {
  return {d.center.x(), d.center.y(), d.size, d.yaw, d.velocity, d.class_label, d.score};
}
inline OracleGt to_oracle(const bevbench::scene::ObjectBox& g) {
  return {g.center.x(), g.center.y(), g.size, g.yaw, g.velocity, g.class_label};
}

// Greedy matching re-implemented directly from its contract. Returns, per
// detection index, the matched gt index or -1.
inline std::vector<int> greedy_match(const std::vector<OracleDet>& dets,
                                     const std::vector<OracleGt>& gts, double thr) {
  std::vector<size_t> order(dets.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    return a < b;
  });
  std::vector<int> match(dets.size(), -1);
  std::vector<bool> used(gts.size(), false);
  for (size_t di : order) {
    int best = -1;
    double best_d = 1e300;
    for (size_t gi = 0; gi < gts.size(); ++gi) {
      if (used[gi]) continue;
      const double d = std::hypot(dets[di].x - gts[gi].x, dets[di].y - gts[gi].y);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(gi);
      }
    }
    if (best >= 0 && best_d <= thr) {
      used[best] = true;
      match[di] = best;
    }
  }
  return match;
}

// AP by sweeping every score cutoff: for each k the top-k detections are
// re-matched from scratch, giving one PR point; the clipped interpolated
// curve is then integrated on the 101-point grid.
inline double ap_cutoff_sweep(std::vector<OracleDet> dets, const std::vector<OracleGt>& gts,
                              double thr) {
  if (gts.empty()) return 0.0;
  std::stable_sort(dets.begin(), dets.end(), [](const OracleDet& a, const OracleDet& b) {
    return a.score > b.score;  // stable: equal scores keep input order
  });

  std::vector<double> recalls, precisions;  // deduped: last point per recall
  double left_prec = 0.0;
  for (size_t k = 1; k <= dets.size(); ++k) {
    const std::vector<OracleDet> head(dets.begin(), dets.begin() + k);
    const std::vector<int> match = greedy_match(head, gts, thr);
    int tp = 0;
    for (int m : match) tp += m >= 0 ? 1 : 0;
    const double rec = static_cast<double>(tp) / gts.size();
    const double prec = static_cast<double>(tp) / k;
    if (k == 1) left_prec = prec;
    if (!recalls.empty() && recalls.back() == rec)
      precisions.back() = prec;
    else {
      recalls.push_back(rec);
      precisions.push_back(prec);
    }
  }

  const auto interp = [&](double g) -> double {
    if (recalls.empty()) return 0.0;
    if (g < recalls.front()) return left_prec;
    if (g > recalls.back()) return 0.0;
    for (size_t i = 0; i < recalls.size(); ++i) {
      if (recalls[i] == g) return precisions[i];
      if (recalls[i] > g) {
        const double t = (g - recalls[i - 1]) / (recalls[i] - recalls[i - 1]);
        return precisions[i - 1] + t * (precisions[i] - precisions[i - 1]);
      }
    }
    return 0.0;
  };

  double area = 0.0;
  for (int i = 11; i <= 100; ++i) area += std::max(0.0, interp(i / 100.0) - 0.1);
  return area / 81.0;
}

struct OracleErrors {
  double ate = 1, ase = 1, aoe = 1, ave = 1, aae = 1;
};

inline OracleErrors tp_errors_direct(const std::vector<OracleDet>& dets,
                                     const std::vector<OracleGt>& gts, double thr,
                                     const std::set<std::string>& symmetric) {
  // Per-class matching at thr, pooled means.
  std::set<std::string> classes;
  for (const auto& g : gts) classes.insert(g.cls);
  double ate = 0, ase = 0, aoe = 0, ave = 0;
  int n = 0;
  for (const std::string& cls : classes) {
    std::vector<OracleDet> cd;
    std::vector<OracleGt> cg;
    for (const auto& d : dets)
      if (d.cls == cls) cd.push_back(d);
    for (const auto& g : gts)
      if (g.cls == cls) cg.push_back(g);
    const std::vector<int> match = greedy_match(cd, cg, thr);
    for (size_t di = 0; di < cd.size(); ++di) {
      if (match[di] < 0) continue;
      const OracleGt& g = cg[match[di]];
      ate += std::hypot(cd[di].x - g.x, cd[di].y - g.y);
      double ratio = 1.0;
      for (int a = 0; a < 3; ++a)
        ratio *= std::min(cd[di].size[a], g.size[a]) / std::max(cd[di].size[a], g.size[a]);
      ase += 1.0 - ratio;
      double dy = std::abs(std::remainder(cd[di].yaw - g.yaw, 2.0 * M_PI));
      if (symmetric.count(cls)) dy = std::min(dy, M_PI - dy);
      aoe += dy;
      ave += (cd[di].velocity - g.velocity).norm();
      ++n;
    }
  }
  OracleErrors e;
  if (n == 0) return e;
  e.ate = ate / n;
  e.ase = ase / n;
  e.aoe = aoe / n;
  e.ave = ave / n;
  e.aae = 0.0;
  return e;
}

inline double nds_formula(double map, const OracleErrors& e) {
  const auto term = [](double x) { return 1.0 - std::min(1.0, x); };
  return (5.0 * map + term(e.ate) + term(e.ase) + term(e.aoe) + term(e.ave) + term(e.aae)) /
         10.0;
}

}  // namespace oracles
