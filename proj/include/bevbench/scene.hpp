#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "bevbench/geometry.hpp"

namespace bevbench::scene {

// Annotated 3D box in the ego frame (z-up, x-forward, y-left).
// size = (width, length, height): width spans local x and length local y at
// yaw 0, so heading (the +length direction) points along +y when yaw = 0.
struct ObjectBox {
  int id = 0;
  std::string class_label;
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Zero();
  double yaw = 0.0;  // radians, (-pi, pi]
  Vec2 velocity = Vec2::Zero();

  void validate() const;  // throws std::invalid_argument
};

// Pinhole camera. pose maps ego -> camera; camera frame is z-forward,
// x-right (image u), y-down (image v).
struct CameraModel {
  std::string id;
  double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;  // pixels
  int width = 0, height = 0;                       // pixels
  RigidTransform pose;                             // ego -> camera

  void validate() const;
};

struct LidarModel {
  RigidTransform pose;  // ego -> sensor
  double max_range = 60.0;
  double points_per_m2_at_10m = 100.0;

  void validate() const;
};

struct Scene {
  uint64_t scene_id = 0;
  RigidTransform ego_pose;  // world -> ego
  std::vector<ObjectBox> objects;
  std::vector<CameraModel> cameras;
  LidarModel lidar;
  uint64_t seed = 0;

  void validate() const;
};

struct ClassSpec {
  std::string name;
  Vec3 size_prior = Vec3::Zero();  // (width, length, height) meters
  double weight = 1.0;             // sampling weight
  bool yaw_symmetric = false;      // orientation only defined modulo pi/2 folding
};

std::vector<ClassSpec> default_classes();
std::vector<std::string> class_names(const std::vector<ClassSpec>& classes);

struct SceneGenConfig {
  int count_min = 4;
  int count_max = 12;
  double extent = 45.0;      // half-size of the square placement region, meters
  double min_radius = 5.0;   // keep-out around the ego vehicle, meters
  double speed_min = 0.0;
  double speed_max = 8.0;
  double size_jitter = 0.15;  // relative, per dimension
  int max_attempts_per_object = 200;
  std::vector<ClassSpec> classes = default_classes();

  // Sensor rig.
  int n_cameras = 6;
  int image_width = 160;
  int image_height = 96;
  double hfov_deg = 70.0;
  double camera_height = 1.6;
  double lidar_height = 1.8;
  double lidar_max_range = 60.0;
  double lidar_density = 100.0;  // points per m^2 at 10 m

  void validate() const;
};

// Deterministic in (config, seed). Objects are rejection-sampled so that BEV
// footprints are pairwise disjoint and stay inside the extent; throws
// std::runtime_error("placement infeasible...") when that cannot be met.
Scene generate_scene(const SceneGenConfig& config, uint64_t seed);

// The 8 corners in ego frame: bottom face first, then top, each in local
// (-x,-y), (+x,-y), (+x,+y), (-x,+y) order. Their centroid equals box.center.
std::array<Vec3, 8> box_corners(const ObjectBox& box);

// BEV footprint corners (same xy order as box_corners' bottom face).
std::array<Vec2, 4> bev_footprint(const ObjectBox& box);

// Strict interior overlap of two convex BEV rectangles (touching edges do not
// count, matching the "intersection area = 0" placement rule).
bool bev_rects_overlap(const std::array<Vec2, 4>& a, const std::array<Vec2, 4>& b);

// JSON serialization ("bevbench-scene/1"); numeric fields round-trip bit-exactly.
std::string scene_to_json(const Scene& s);
Scene scene_from_json(const std::string& text);
void save_scene(const std::string& path, const Scene& s);
Scene load_scene(const std::string& path);

}  // namespace bevbench::scene
