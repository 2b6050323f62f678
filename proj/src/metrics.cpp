#include "bevbench/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace bevbench::metrics {

using detect::Detection;
using scene::ObjectBox;

double EvalResult::class_ap(const std::string& cls) const {
  const auto it = cells.find(cls);
  if (it == cells.end()) return 0.0;
  double sum = 0.0;
  int n = 0;
  for (const auto& [thr, cell] : it->second) {
    if (!cell.included) continue;
    sum += cell.ap;
    ++n;
  }
  return n ? sum / n : 0.0;
}

MatchSet match_by_center_distance(const std::vector<Detection>& dets,
                                  const std::vector<ObjectBox>& gts, double threshold) {
  MatchSet ms;
  ms.threshold = threshold;

  std::vector<int> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&dets](int a, int b) {
    return dets[a].score > dets[b].score;  // ties keep index order
  });

  std::vector<bool> taken(gts.size(), false);
  for (int di : order) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t gi = 0; gi < gts.size(); ++gi) {
      if (taken[gi]) continue;
      const double d = std::hypot(dets[di].center.x() - gts[gi].center.x(),
                                  dets[di].center.y() - gts[gi].center.y());
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(gi);
      }
    }
    if (best >= 0 && best_d <= threshold) {
      taken[best] = true;
      ms.pairs.push_back({di, best, best_d});
    } else {
      ms.unmatched_dets.push_back(di);
    }
  }
  for (size_t gi = 0; gi < gts.size(); ++gi)
    if (!taken[gi]) ms.unmatched_gts.push_back(static_cast<int>(gi));
  return ms;
}

// ---------------------------------------------------------------------------
// PR curves
//
// Interpolation contract (shared with the test oracles): prefix points
// (recall_k, precision_k) for k = 1..K over the pooled detections sorted by
// (score desc, scene, index); per distinct recall only the last (lowest
// precision) point is kept; precision is piecewise linear between kept points,
// extends left with the k = 1 precision and right with 0. AP averages
// max(0, P(g) - 0.1) over the grid g = 0.11..1.00 and divides by 0.9.

namespace {

struct ScoredFlag {
  double score;
  int scene;
  int index;
  bool tp;
};

struct PrPoints {
  std::vector<double> rec, prec;  // deduped, rec strictly increasing
  double left_prec = 0.0;
};

PrPoints pr_points(std::vector<ScoredFlag> entries, size_t npos) {
  std::sort(entries.begin(), entries.end(), [](const ScoredFlag& a, const ScoredFlag& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.scene != b.scene) return a.scene < b.scene;
    return a.index < b.index;
  });
  PrPoints out;
  size_t tp = 0;
  for (size_t k = 0; k < entries.size(); ++k) {
    if (entries[k].tp) ++tp;
    const double rec = static_cast<double>(tp) / static_cast<double>(npos);
    const double prec = static_cast<double>(tp) / static_cast<double>(k + 1);
    if (k == 0) out.left_prec = prec;
    if (!out.rec.empty() && out.rec.back() == rec) {
      out.prec.back() = prec;  // keep the last point at this recall
    } else {
      out.rec.push_back(rec);
      out.prec.push_back(prec);
    }
  }
  return out;
}

double curve_precision(const PrPoints& c, double g) {
  if (c.rec.empty()) return 0.0;
  if (g < c.rec.front()) return c.left_prec;
  if (g > c.rec.back()) return 0.0;
  const auto it = std::lower_bound(c.rec.begin(), c.rec.end(), g);
  const size_t i = static_cast<size_t>(it - c.rec.begin());
  if (c.rec[i] == g) return c.prec[i];
  const double t = (g - c.rec[i - 1]) / (c.rec[i] - c.rec[i - 1]);
  return c.prec[i - 1] + t * (c.prec[i] - c.prec[i - 1]);
}

double ap_from_points(const PrPoints& c, std::vector<double>* grid_out) {
  if (grid_out) grid_out->assign(101, 0.0);
  double sum = 0.0;
  for (int i = 11; i <= 100; ++i) {
    const double p = curve_precision(c, i / 100.0);
    if (grid_out) (*grid_out)[i] = p;
    sum += std::max(0.0, p - 0.1);
  }
  if (grid_out)
    for (int i = 0; i <= 10; ++i) (*grid_out)[i] = curve_precision(c, i / 100.0);
  return (sum / 90.0) / 0.9;
}

template <typename T>
std::vector<T> filter_by_class(const std::vector<T>& items, const std::string& cls,
                               std::vector<int>* global_indices) {
  std::vector<T> out;
  if (global_indices) global_indices->clear();
  for (size_t i = 0; i < items.size(); ++i) {
    if (items[i].class_label != cls) continue;
    out.push_back(items[i]);
    if (global_indices) global_indices->push_back(static_cast<int>(i));
  }
  return out;
}

}  // namespace

double average_precision(const std::vector<Detection>& dets,
                         const std::vector<ObjectBox>& gts, double threshold) {
  if (gts.empty()) return 0.0;
  const MatchSet ms = match_by_center_distance(dets, gts, threshold);
  std::vector<bool> is_tp(dets.size(), false);
  for (const MatchPair& p : ms.pairs) is_tp[p.det_index] = true;
  std::vector<ScoredFlag> entries;
  entries.reserve(dets.size());
  for (size_t i = 0; i < dets.size(); ++i)
    entries.push_back({dets[i].score, 0, static_cast<int>(i), is_tp[i]});
  return ap_from_points(pr_points(std::move(entries), gts.size()), nullptr);
}

TpErrors tp_errors(const MatchSet& matches, const std::vector<Detection>& dets,
                   const std::vector<ObjectBox>& gts,
                   const std::set<std::string>& symmetric_classes) {
  TpErrors e;
  if (matches.pairs.empty()) return e;  // maximum penalty defaults

  double ate = 0.0, ase = 0.0, aoe = 0.0, ave = 0.0;
  for (const MatchPair& p : matches.pairs) {
    const Detection& d = dets.at(p.det_index);
    const ObjectBox& g = gts.at(p.gt_index);
    ate += p.distance;

    double ratio = 1.0;
    for (int a = 0; a < 3; ++a)
      ratio *= std::min(d.size[a], g.size[a]) / std::max(d.size[a], g.size[a]);
    ase += 1.0 - ratio;

    double dyaw = std::abs(wrap_angle(d.yaw - g.yaw));  // [0, pi]
    if (symmetric_classes.count(g.class_label)) dyaw = std::min(dyaw, M_PI - dyaw);
    aoe += dyaw;

    ave += (d.velocity - g.velocity).norm();
  }
  const double n = static_cast<double>(matches.pairs.size());
  e.ate = ate / n;
  e.ase = ase / n;
  e.aoe = aoe / n;
  e.ave = ave / n;
  e.aae = 0.0;  // the placeholder attribute always matches
  return e;
}

double nds(double map, const TpErrors& errors) {
  const double terms = (1.0 - std::min(1.0, errors.ate)) + (1.0 - std::min(1.0, errors.ase)) +
                       (1.0 - std::min(1.0, errors.aoe)) + (1.0 - std::min(1.0, errors.ave)) +
                       (1.0 - std::min(1.0, errors.aae));
  return (5.0 * map + terms) / 10.0;
}

EvalResult evaluate_dataset(const std::vector<std::vector<Detection>>& dets_per_scene,
                            const std::vector<std::vector<ObjectBox>>& gts_per_scene,
                            const EvalConfig& cfg) {
  if (dets_per_scene.size() != gts_per_scene.size())
    throw std::invalid_argument("evaluate_dataset: scene count mismatch");
  const int n_scenes = static_cast<int>(dets_per_scene.size());

  EvalResult res;
  for (int s = 0; s < n_scenes; ++s) {
    res.n_dets += dets_per_scene[s].size();
    res.n_gts += gts_per_scene[s].size();
  }
  res.no_gt = res.n_gts == 0;
  for (double thr : cfg.thresholds) res.counts[thr] = {0, 0, 0};

  // Flattened views for the pooled TP-error match set.
  std::vector<Detection> dets_all;
  std::vector<ObjectBox> gts_all;
  std::vector<size_t> det_offset(n_scenes + 1, 0), gt_offset(n_scenes + 1, 0);
  for (int s = 0; s < n_scenes; ++s) {
    dets_all.insert(dets_all.end(), dets_per_scene[s].begin(), dets_per_scene[s].end());
    gts_all.insert(gts_all.end(), gts_per_scene[s].begin(), gts_per_scene[s].end());
    det_offset[s + 1] = dets_all.size();
    gt_offset[s + 1] = gts_all.size();
  }
  MatchSet pooled;
  pooled.threshold = cfg.tp_threshold;

  double ap_sum = 0.0;
  int ap_cells = 0;
  for (const std::string& cls : cfg.classes) {
    // Per-scene class-filtered views, with global index maps.
    std::vector<std::vector<Detection>> cdets(n_scenes);
    std::vector<std::vector<ObjectBox>> cgts(n_scenes);
    std::vector<std::vector<int>> det_map(n_scenes), gt_map(n_scenes);
    size_t npos = 0;
    for (int s = 0; s < n_scenes; ++s) {
      cdets[s] = filter_by_class(dets_per_scene[s], cls, &det_map[s]);
      cgts[s] = filter_by_class(gts_per_scene[s], cls, &gt_map[s]);
      npos += cgts[s].size();
    }

    for (double thr : cfg.thresholds) {
      std::vector<ScoredFlag> entries;
      size_t tp_total = 0;
      for (int s = 0; s < n_scenes; ++s) {
        const MatchSet ms = match_by_center_distance(cdets[s], cgts[s], thr);
        std::vector<bool> is_tp(cdets[s].size(), false);
        for (const MatchPair& p : ms.pairs) is_tp[p.det_index] = true;
        tp_total += ms.pairs.size();
        for (size_t i = 0; i < cdets[s].size(); ++i)
          entries.push_back({cdets[s][i].score, s, static_cast<int>(i), is_tp[i]});
      }

      ClassThresholdCell cell;
      cell.tp = static_cast<int>(tp_total);
      cell.fp = static_cast<int>(entries.size() - tp_total);
      cell.fn = static_cast<int>(npos - tp_total);
      auto& c = res.counts[thr];
      c[0] += cell.tp;
      c[1] += cell.fp;
      c[2] += cell.fn;

      if (npos > 0) {
        const PrPoints points = pr_points(std::move(entries), npos);
        std::vector<double> grid;
        cell.ap = ap_from_points(points, cfg.dump_pr ? &grid : nullptr);
        cell.included = true;
        ap_sum += cell.ap;
        ++ap_cells;
        if (cfg.dump_pr) {
          PrCurve curve;
          curve.class_label = cls;
          curve.threshold = thr;
          curve.recall = points.rec;
          curve.precision = points.prec;
          curve.grid_precision = std::move(grid);
          res.pr_curves.push_back(std::move(curve));
        }
      }
      res.cells[cls][thr] = cell;
    }

    // TP-error matching at the dedicated threshold, pooled with global indices.
    for (int s = 0; s < n_scenes; ++s) {
      const MatchSet ms = match_by_center_distance(cdets[s], cgts[s], cfg.tp_threshold);
      for (const MatchPair& p : ms.pairs)
        pooled.pairs.push_back({static_cast<int>(det_offset[s]) + det_map[s][p.det_index],
                                static_cast<int>(gt_offset[s]) + gt_map[s][p.gt_index],
                                p.distance});
      for (int ud : ms.unmatched_dets)
        pooled.unmatched_dets.push_back(static_cast<int>(det_offset[s]) + det_map[s][ud]);
      for (int ug : ms.unmatched_gts)
        pooled.unmatched_gts.push_back(static_cast<int>(gt_offset[s]) + gt_map[s][ug]);
    }
  }

  res.map = ap_cells ? ap_sum / ap_cells : 0.0;
  res.errors = tp_errors(pooled, dets_all, gts_all, cfg.symmetric_classes);
  res.nds = nds(res.map, res.errors);
  return res;
}

EvalResult evaluate(const std::vector<Detection>& dets, const std::vector<ObjectBox>& gts,
                    const EvalConfig& cfg) {
  return evaluate_dataset({dets}, {gts}, cfg);
}

std::string eval_result_to_json(const EvalResult& r) {
  nlohmann::json j;
  j["format"] = "bevbench-eval/1";
  j["mAP"] = r.map;
  j["NDS"] = r.nds;
  j["tp_errors"] = {{"ATE", r.errors.ate},
                    {"ASE", r.errors.ase},
                    {"AOE", r.errors.aoe},
                    {"AVE", r.errors.ave},
                    {"AAE", r.errors.aae}};
  j["n_detections"] = r.n_dets;
  j["n_ground_truths"] = r.n_gts;
  j["no_gt"] = r.no_gt;
  nlohmann::json cells = nlohmann::json::object();
  for (const auto& [cls, per_thr] : r.cells) {
    nlohmann::json jc = nlohmann::json::object();
    for (const auto& [thr, cell] : per_thr) {
      jc[std::to_string(thr)] = {{"ap", cell.ap},
                                 {"included", cell.included},
                                 {"tp", cell.tp},
                                 {"fp", cell.fp},
                                 {"fn", cell.fn}};
    }
    cells[cls] = std::move(jc);
  }
  j["per_class"] = std::move(cells);
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [thr, c] : r.counts)
    counts[std::to_string(thr)] = {{"tp", c[0]}, {"fp", c[1]}, {"fn", c[2]}};
  j["counts"] = std::move(counts);
  if (!r.pr_curves.empty()) {
    nlohmann::json curves = nlohmann::json::array();
    for (const PrCurve& c : r.pr_curves) {
      curves.push_back({{"class", c.class_label},
                        {"threshold", c.threshold},
                        {"recall", c.recall},
                        {"precision", c.precision},
                        {"grid_precision", c.grid_precision}});
    }
    j["pr_curves"] = std::move(curves);
  }
  return j.dump(2);
}

}  // namespace bevbench::metrics
