#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bevbench/scene.hpp"

namespace bevbench::sensors {

// object_id tag values below 0.
constexpr int32_t kGroundId = -1;
constexpr int32_t kNoneId = -2;

// Stored as float32 so that in-memory clouds match the on-disk format exactly.
struct LidarPoint {
  float x = 0, y = 0, z = 0;
  float intensity = 0;       // 1 - d/max_range, clamped to [0, 1]
  int32_t object_id = kNoneId;  // diagnostics only
};

struct PointCloud {
  std::vector<LidarPoint> points;
};

// Per-camera feature map: one channel per class plus a trailing occupancy
// channel, together with the depth oracle (camera-frame z; 0 = no surface).
struct FeatureImage {
  std::string camera_id;
  int height = 0, width = 0, channels = 0;
  std::vector<std::string> channel_names;  // "class/<name>"..., "occupancy"
  std::vector<double> grid;                // height*width*channels, row-major
  std::vector<double> depth;               // height*width

  double& at(int v, int u, int c) {
    return grid[(static_cast<size_t>(v) * width + u) * channels + c];
  }
  double at(int v, int u, int c) const {
    return grid[(static_cast<size_t>(v) * width + u) * channels + c];
  }
  double& depth_at(int v, int u) { return depth[static_cast<size_t>(v) * width + u]; }
  double depth_at(int v, int u) const { return depth[static_cast<size_t>(v) * width + u]; }

  int occupancy_channel() const;  // throws if absent
  void validate() const;
};

struct GroundConfig {
  bool enabled = false;
  double r_min = 3.0;
  double r_max = 45.0;
  double density_scale = 1.0;
};

struct RenderConfig {
  GroundConfig ground;
  std::vector<std::string> classes = scene::class_names(scene::default_classes());
  double camera_oversample = 1.5;  // samples per pixel along each face axis
  double z_near = 0.5;             // camera near plane, meters
  int max_samples_per_edge = 600;
};

// Samples the 5 visible faces (4 sides + top) of every box, with expected
// count area * density * (10/d)^2 per face, plus an optional ground annulus.
// Deterministic in (scene, seed); every object point lies on its box surface.
PointCloud render_lidar(const scene::Scene& s, uint64_t seed,
                        const RenderConfig& cfg = {});

// Deterministic z-buffered projection of box surface samples through each
// pinhole camera. No randomness: bit-identical across calls.
std::vector<FeatureImage> render_cameras(const scene::Scene& s,
                                         const RenderConfig& cfg = {});

// Flat binary cloud format: magic "BVPC", u32 version, u64 count, then
// count * 4 float32 (x, y, z, intensity), little-endian. object_id tags go to
// a JSON sidecar "<path>.ids.json".
void save_point_cloud(const std::string& path, const PointCloud& cloud);
PointCloud load_point_cloud(const std::string& path);

// Feature image binary: magic "BVFI", u32 version, camera id, dims, channel
// name table, then float64 grid and float64 depth (layout in docs/formats.md).
void save_feature_image(const std::string& path, const FeatureImage& img);
FeatureImage load_feature_image(const std::string& path);

}  // namespace bevbench::sensors
