#pragma once

#include <array>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "bevbench/detect.hpp"
#include "bevbench/scene.hpp"

namespace bevbench::metrics {

struct MatchPair {
  int det_index = -1;
  int gt_index = -1;
  double distance = 0.0;  // BEV center distance, meters
};

struct MatchSet {
  std::vector<MatchPair> pairs;
  std::vector<int> unmatched_dets;
  std::vector<int> unmatched_gts;
  double threshold = 0.0;
};

struct TpErrors {
  double ate = 1.0;  // mean BEV center distance, meters
  double ase = 1.0;  // mean (1 - per-axis min/max size-volume ratio)
  double aoe = 1.0;  // mean folded yaw error, radians
  double ave = 1.0;  // mean 2D velocity error, m/s
  double aae = 1.0;  // placeholder attribute error (0 whenever matches exist)
};

struct ClassThresholdCell {
  double ap = 0.0;
  bool included = false;  // false when the class has no ground truth
  int tp = 0, fp = 0, fn = 0;
};

struct PrCurve {
  std::string class_label;
  double threshold = 0.0;
  std::vector<double> recall;     // raw points, after per-recall dedup
  std::vector<double> precision;
  std::vector<double> grid_precision;  // on the 101-point recall grid
};

struct EvalResult {
  std::map<std::string, std::map<double, ClassThresholdCell>> cells;
  double map = 0.0;
  TpErrors errors;
  double nds = 0.0;
  size_t n_dets = 0, n_gts = 0;
  std::map<double, std::array<int, 3>> counts;  // threshold -> {tp, fp, fn}
  bool no_gt = false;
  std::vector<PrCurve> pr_curves;  // populated when EvalConfig::dump_pr

  // Mean AP over a class's included cells (used for report columns).
  double class_ap(const std::string& cls) const;
};

struct EvalConfig {
  std::vector<std::string> classes = scene::class_names(scene::default_classes());
  std::vector<double> thresholds = {0.5, 1.0, 2.0, 4.0};  // meters
  double tp_threshold = 2.0;                              // meters
  std::set<std::string> symmetric_classes = {"barrier"};  // yaw folded to [0, pi/2]
  bool dump_pr = false;
};

// Greedy matching: detections in descending score (ties by index) take the
// nearest unmatched GT within the threshold. Inputs are class-filtered.
MatchSet match_by_center_distance(const std::vector<detect::Detection>& dets,
                                  const std::vector<scene::ObjectBox>& gts,
                                  double threshold);

// Operating-region AP: precision interpolated onto a 101-point recall grid,
// 0.1 recall/precision floors subtracted, normalized by 0.81. Inputs are
// class-filtered; 0 when there are detections to rank but nothing is ever
// recalled, undefined (reported 0, excluded) when there is no ground truth.
double average_precision(const std::vector<detect::Detection>& dets,
                         const std::vector<scene::ObjectBox>& gts, double threshold);

// Plain means over the matched pairs (maximum penalty 1.0 per error when the
// match set is empty). `matches` must come from the tp_threshold matching and
// index into dets/gts.
TpErrors tp_errors(const MatchSet& matches, const std::vector<detect::Detection>& dets,
                   const std::vector<scene::ObjectBox>& gts,
                   const std::set<std::string>& symmetric_classes = {"barrier"});

// NDS = (1/10) * [5*mAP + sum over the 5 errors of (1 - min(1, err))].
double nds(double map, const TpErrors& errors);

// Dataset-level evaluation: matching happens within each scene, the PR curve
// pools detections across scenes.
EvalResult evaluate_dataset(const std::vector<std::vector<detect::Detection>>& dets_per_scene,
                            const std::vector<std::vector<scene::ObjectBox>>& gts_per_scene,
                            const EvalConfig& cfg);

// Single-collection convenience wrapper.
EvalResult evaluate(const std::vector<detect::Detection>& dets,
                    const std::vector<scene::ObjectBox>& gts, const EvalConfig& cfg);

std::string eval_result_to_json(const EvalResult& r);

}  // namespace bevbench::metrics
