#pragma once

#include <string>
#include <vector>

#include "bevbench/bevpipe.hpp"
#include "bevbench/geometry.hpp"

namespace bevbench::detect {

struct Detection {
  Vec2 center = Vec2::Zero();  // BEV meters
  double z = 0.0;              // class prior
  Vec3 size = Vec3::Zero();    // (width, length, height)
  double yaw = 0.0;            // principal-axis angle, (-pi/2, pi/2]
  Vec2 velocity = Vec2::Zero();
  std::string class_label;
  double score = 0.0;  // (0, 1]
};

struct ClassPrior {
  std::string name;
  double height = 1.7;
};

struct DetectorParams {
  double peak_threshold = 0.8;   // minimum heatmap value at a peak
  double nms_radius = 4.0;       // meters
  double cluster_radius = 3.2;   // meters
  int min_cluster_cells = 3;
  double score_scale = 8.0;      // score = 1 - exp(-peak_mass / score_scale)
  std::vector<ClassPrior> class_priors;  // index order = class tie-break order

  void validate() const;
};

std::vector<ClassPrior> default_class_priors();

// Occupancy-evidence heatmap: sum of the occupancy-bearing channels
// ("...point_count" / "...occupancy" per the channel manifest), box-mean
// smoothed with radius 1 cell. Throws when no such channel exists.
std::vector<double> center_heatmap(const bevpipe::BEVGrid& bev, Exec exec = Exec::parallel);

// Peaks are strict local maxima of the heatmap at or above peak_threshold,
// thinned by greedy radial NMS in descending value (ties by cell index). Each
// surviving peak grows a cluster from the positive cells of the raw occupancy
// field within cluster_radius; center, yaw and extent come from the cluster's
// mass moments, the class from the summed class channels. Deterministic.
std::vector<Detection> extract_detections(const bevpipe::BEVGrid& bev,
                                          const std::vector<double>& heatmap,
                                          const DetectorParams& params);

// JSON serialization ("bevbench-dets/1").
std::string detections_to_json(const std::vector<Detection>& dets);
std::vector<Detection> detections_from_json(const std::string& text);
void save_detections(const std::string& path, const std::vector<Detection>& dets);
std::vector<Detection> load_detections(const std::string& path);

}  // namespace bevbench::detect
