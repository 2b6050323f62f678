#pragma once

#include <string>
#include <vector>

#include "bevbench/kernels.hpp"
#include "bevbench/scene.hpp"
#include "bevbench/sensors.hpp"

namespace bevbench::bevpipe {

// Regular voxel grid over the ego frame. Cell counts are ceil(range/res) with
// a 1e-9 relative snap so that e.g. 108 m / 0.3 m gives exactly 360 cells.
struct GridSpec {
  double x_min = -54.0, x_max = 54.0;
  double y_min = -54.0, y_max = 54.0;
  double z_min = -5.0, z_max = 3.0;
  double rx = 0.3, ry = 0.3, rz = 0.5;

  int nx() const;
  int ny() const;
  int nz() const;
  // Cell index along one axis; a point on a cell's max edge belongs to the
  // next cell, except at the grid max which is clipped into the last cell.
  // Returns -1 when out of range.
  static int cell_index(double v, double lo, double hi, double res, int n);
  int cell_x(double x) const { return cell_index(x, x_min, x_max, rx, nx()); }
  int cell_y(double y) const { return cell_index(y, y_min, y_max, ry, ny()); }
  int cell_z(double z) const { return cell_index(z, z_min, z_max, rz, nz()); }
  double center_x(int i) const { return x_min + (i + 0.5) * rx; }
  double center_y(int j) const { return y_min + (j + 0.5) * ry; }
  double center_z(int k) const { return z_min + (k + 0.5) * rz; }
  bool same_bev_plane(const GridSpec& o) const;
  void validate() const;
};

struct VoxelGrid {
  GridSpec spec;
  int channels = 0;
  std::vector<std::string> channel_names;
  std::vector<double> data;  // nx*ny*nz*channels, x-major

  size_t index(int x, int y, int z, int c) const {
    return ((static_cast<size_t>(x) * spec.ny() + y) * spec.nz() + z) * channels + c;
  }
  double& at(int x, int y, int z, int c) { return data[index(x, y, z, c)]; }
  double at(int x, int y, int z, int c) const { return data[index(x, y, z, c)]; }
};

struct BEVGrid {
  GridSpec spec;  // z collapsed; z fields kept for provenance
  int channels = 0;
  std::vector<std::string> channel_names;
  std::vector<double> data;  // nx*ny*channels, x-major

  size_t index(int x, int y, int c) const {
    return (static_cast<size_t>(x) * spec.ny() + y) * channels + c;
  }
  double& at(int x, int y, int c) { return data[index(x, y, c)]; }
  double at(int x, int y, int c) const { return data[index(x, y, c)]; }
};

struct DepthBins {
  double z_near = 1.0;
  double z_far = 61.0;
  int count = 120;

  double width() const { return (z_far - z_near) / count; }
  double center(int d) const { return z_near + (d + 0.5) * width(); }
  void validate() const;
};

enum class DepthMode { uniform, oracle };

// Per-pixel probabilities over depth bins; rows are normalized or all-zero.
struct DepthDistribution {
  int height = 0, width = 0;
  DepthBins bins;
  std::vector<double> p;  // height*width*count

  double at(int v, int u, int d) const {
    return p[(static_cast<size_t>(v) * width + u) * bins.count + d];
  }
};

struct PipelineConfig {
  GridSpec grid;
  DepthBins bins;
  DepthMode depth_mode = DepthMode::oracle;
  double tau = 0.35;       // oracle depth spread, meters
  int encoder_radius = 0;  // BEV encoder smoothing radius, cells
  void validate() const;
};

enum class SensorMode { C, L, CL };
std::string sensor_mode_name(SensorMode m);
SensorMode sensor_mode_from_name(const std::string& name);

// Channels: [point_count, mean_intensity, mean_z_offset]. The count channel is
// integer-valued and conserves the in-range point count exactly.
VoxelGrid voxelize(const sensors::PointCloud& cloud, const GridSpec& spec,
                   Exec exec = Exec::parallel);

// uniform: every occupied pixel gets 1/D in each bin. oracle: a Gaussian of
// width tau around the pixel's depth-oracle value, normalized over the bins;
// pixels without a depth-oracle value (depth == 0) stay all-zero in oracle
// mode since there is nothing to condition on.
DepthDistribution estimate_depth_distribution(const sensors::FeatureImage& img,
                                              const DepthBins& bins, DepthMode mode,
                                              double tau, Exec exec = Exec::parallel);

// Scatter p_d * f(u, v) along each pixel's ray into the containing voxels.
VoxelGrid lift_camera_features(const sensors::FeatureImage& img,
                               const DepthDistribution& dist,
                               const scene::CameraModel& camera, const GridSpec& spec,
                               Exec exec = Exec::parallel);
void lift_accumulate(VoxelGrid& acc, const sensors::FeatureImage& img,
                     const DepthDistribution& dist, const scene::CameraModel& camera,
                     Exec exec = Exec::parallel);

// Exact sum over z per (x, y, channel).
BEVGrid bev_pool(const VoxelGrid& grid, Exec exec = Exec::parallel);

// Single-branch BEV features (voxelize/lift + pool), before fusion.
BEVGrid lidar_bev(const sensors::PointCloud& cloud, const PipelineConfig& cfg,
                  Exec exec = Exec::parallel);
BEVGrid camera_bev(const std::vector<sensors::FeatureImage>& images,
                   const std::vector<scene::CameraModel>& cameras,
                   const PipelineConfig& cfg, Exec exec = Exec::parallel);
// Zero-channel stand-in for an omitted branch.
BEVGrid empty_bev(const GridSpec& spec);

// Channel concatenation followed by the fixed box-mean BEV encoder
// (mass-preserving; radius 0 = identity).
BEVGrid fuse_bev(const BEVGrid& cam, const BEVGrid& lidar, int encoder_radius,
                 Exec exec = Exec::parallel);

// Full data path for one scene's sensor outputs. The camera branch sums the
// lifted grids of all cameras before pooling; an omitted branch contributes
// zero channels.
BEVGrid run_pipeline(const std::vector<sensors::FeatureImage>& images,
                     const std::vector<scene::CameraModel>& cameras,
                     const sensors::PointCloud& cloud, const PipelineConfig& cfg,
                     SensorMode mode, Exec exec = Exec::parallel);

// Debug dump: raw tensor ("BVBG") plus channel-name manifest JSON.
void save_bev_grid(const std::string& path, const BEVGrid& grid);
BEVGrid load_bev_grid(const std::string& path);

}  // namespace bevbench::bevpipe
