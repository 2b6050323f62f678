#include "bevbench/bevpipe.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace bevbench::bevpipe {

using scene::CameraModel;
using sensors::FeatureImage;
using sensors::PointCloud;

namespace {

int axis_cells(double lo, double hi, double res) {
  const double q = (hi - lo) / res;
  const double r = std::round(q);
  if (std::abs(q - r) <= 1e-9 * std::max(1.0, std::abs(q))) return static_cast<int>(r);
  return static_cast<int>(std::ceil(q));
}

}  // namespace

int GridSpec::nx() const { return axis_cells(x_min, x_max, rx); }
int GridSpec::ny() const { return axis_cells(y_min, y_max, ry); }
int GridSpec::nz() const { return axis_cells(z_min, z_max, rz); }

int GridSpec::cell_index(double v, double lo, double hi, double res, int n) {
  if (!(v >= lo && v <= hi)) return -1;
  int i = static_cast<int>(std::floor((v - lo) / res));
  if (i >= n) i = n - 1;
  if (i < 0) i = 0;
  return i;
}

bool GridSpec::same_bev_plane(const GridSpec& o) const {
  return x_min == o.x_min && x_max == o.x_max && y_min == o.y_min && y_max == o.y_max &&
         rx == o.rx && ry == o.ry;
}

void GridSpec::validate() const {
  if (!(x_max > x_min && y_max > y_min && z_max > z_min))
    throw std::invalid_argument("GridSpec: empty range");
  if (!(rx > 0.0 && ry > 0.0 && rz > 0.0))
    throw std::invalid_argument("GridSpec: resolution must be > 0");
}

void DepthBins::validate() const {
  if (count < 1) throw std::invalid_argument("DepthBins: need at least one bin");
  if (!(z_far > z_near && z_near >= 0.0))
    throw std::invalid_argument("DepthBins: bad depth range");
}

void PipelineConfig::validate() const {
  grid.validate();
  bins.validate();
  if (!(tau > 0.0)) throw std::invalid_argument("PipelineConfig: tau must be > 0");
  if (encoder_radius < 0) throw std::invalid_argument("PipelineConfig: bad encoder radius");
}

std::string sensor_mode_name(SensorMode m) {
  switch (m) {
    case SensorMode::C: return "C";
    case SensorMode::L: return "L";
    case SensorMode::CL: return "C+L";
  }
  return "?";
}

SensorMode sensor_mode_from_name(const std::string& name) {
  if (name == "C") return SensorMode::C;
  if (name == "L") return SensorMode::L;
  if (name == "C+L" || name == "CL") return SensorMode::CL;
  throw std::invalid_argument("unknown sensor mode: " + name);
}

// ---------------------------------------------------------------------------
// Voxelization

namespace {

constexpr int kCountCh = 0, kIntensityCh = 1, kZOffsetCh = 2;

inline void finalize_voxel_means(double* v) {
  const double count = v[kCountCh];
  if (count > 0.0) {
    v[kIntensityCh] /= count;
    v[kZOffsetCh] /= count;
  }
}

}  // namespace

VoxelGrid voxelize(const PointCloud& cloud, const GridSpec& spec, Exec exec) {
  spec.validate();
  VoxelGrid grid;
  grid.spec = spec;
  grid.channels = 3;
  grid.channel_names = {"lidar/point_count", "lidar/mean_intensity", "lidar/mean_z_offset"};
  const int nx = spec.nx(), ny = spec.ny(), nz = spec.nz();
  const size_t n_vox = static_cast<size_t>(nx) * ny * nz;
  grid.data.assign(n_vox * grid.channels, 0.0);
  const size_t n_pts = cloud.points.size();

  if (exec == Exec::serial) {
    for (size_t i = 0; i < n_pts; ++i) {
      const auto& p = cloud.points[i];
      const int ix = spec.cell_x(p.x), iy = spec.cell_y(p.y), iz = spec.cell_z(p.z);
      if (ix < 0 || iy < 0 || iz < 0) continue;
      double* v = &grid.at(ix, iy, iz, 0);
      v[kCountCh] += 1.0;
      v[kIntensityCh] += static_cast<double>(p.intensity);
      v[kZOffsetCh] += static_cast<double>(p.z) - spec.center_z(iz);
    }
    for (size_t vi = 0; vi < n_vox; ++vi) finalize_voxel_means(&grid.data[vi * 3]);
    return grid;
  }

  // Parallel path: group point indices per voxel (stable), then reduce each
  // voxel over its points in source order, which matches the serial
  // accumulation order bit for bit.
  std::vector<int64_t> cell(n_pts);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n_pts); ++i) {
    const auto& p = cloud.points[i];
    const int ix = spec.cell_x(p.x), iy = spec.cell_y(p.y), iz = spec.cell_z(p.z);
    cell[i] = (ix < 0 || iy < 0 || iz < 0)
                  ? -1
                  : (static_cast<int64_t>(ix) * ny + iy) * nz + iz;
  }
  std::vector<uint32_t> counts(n_vox + 1, 0);
  for (size_t i = 0; i < n_pts; ++i)
    if (cell[i] >= 0) ++counts[static_cast<size_t>(cell[i])];
  std::vector<size_t> offset(n_vox + 1, 0);
  for (size_t v = 0; v < n_vox; ++v) offset[v + 1] = offset[v] + counts[v];
  std::vector<uint32_t> order(offset[n_vox]);
  {
    std::vector<size_t> cursor(offset.begin(), offset.end() - 1);
    for (size_t i = 0; i < n_pts; ++i)
      if (cell[i] >= 0) order[cursor[static_cast<size_t>(cell[i])]++] = static_cast<uint32_t>(i);
  }
#pragma omp parallel for schedule(static)
  for (long long v = 0; v < static_cast<long long>(n_vox); ++v) {
    const size_t begin = offset[v], end = offset[v + 1];
    if (begin == end) continue;
    const int iz = static_cast<int>(v % nz);
    double* dst = &grid.data[static_cast<size_t>(v) * 3];
    for (size_t k = begin; k < end; ++k) {
      const auto& p = cloud.points[order[k]];
      dst[kCountCh] += 1.0;
      dst[kIntensityCh] += static_cast<double>(p.intensity);
      dst[kZOffsetCh] += static_cast<double>(p.z) - spec.center_z(iz);
    }
    finalize_voxel_means(dst);
  }
  return grid;
}

// ---------------------------------------------------------------------------
// Depth distributions and lifting

namespace {

void depth_row(const FeatureImage& img, const DepthBins& bins, DepthMode mode, double tau,
               int occ_ch, int v, std::vector<double>& p) {
  const int d_count = bins.count;
  for (int u = 0; u < img.width; ++u) {
    double* dst = &p[(static_cast<size_t>(v) * img.width + u) * d_count];
    const bool has_feature = img.at(v, u, occ_ch) > 0.0;
    if (!has_feature) continue;
    if (mode == DepthMode::uniform) {
      const double q = 1.0 / d_count;
      for (int d = 0; d < d_count; ++d) dst[d] = q;
      continue;
    }
    const double de = img.depth_at(v, u);
    if (!(de > 0.0)) continue;  // no oracle value to condition on
    // Bins beyond 8*tau carry < e^-32 relative weight; leave them at zero so
    // the distribution is sparse and normalization stays exact over the rest.
    const double window = 8.0 * tau;
    double norm = 0.0;
    for (int d = 0; d < d_count; ++d) {
      const double delta = bins.center(d) - de;
      if (std::abs(delta) > window) continue;
      const double w = std::exp(-(delta * delta) / (2.0 * tau * tau));
      dst[d] = w;
      norm += w;
    }
    if (norm > 0.0) {
      for (int d = 0; d < d_count; ++d) dst[d] /= norm;
    } else {
      // All weights underflowed; collapse onto the nearest bin.
      int best = 0;
      for (int d = 1; d < d_count; ++d)
        if (std::abs(bins.center(d) - de) < std::abs(bins.center(best) - de)) best = d;
      dst[best] = 1.0;
    }
  }
}

}  // namespace

DepthDistribution estimate_depth_distribution(const FeatureImage& img, const DepthBins& bins,
                                              DepthMode mode, double tau, Exec exec) {
  bins.validate();
  if (mode == DepthMode::oracle && !(tau > 0.0))
    throw std::invalid_argument("estimate_depth_distribution: tau must be > 0");
  DepthDistribution dist;
  dist.height = img.height;
  dist.width = img.width;
  dist.bins = bins;
  dist.p.assign(static_cast<size_t>(img.height) * img.width * bins.count, 0.0);
  const int occ_ch = img.occupancy_channel();

  if (exec == Exec::serial) {
    for (int v = 0; v < img.height; ++v)
      depth_row(img, bins, mode, tau, occ_ch, v, dist.p);
  } else {
#pragma omp parallel for schedule(static)
    for (int v = 0; v < img.height; ++v)
      depth_row(img, bins, mode, tau, occ_ch, v, dist.p);
  }
  return dist;
}

namespace {

struct LiftContribution {
  int64_t voxel;
  int32_t u;
  double weight;
};

// Geometry of one pixel row: ray points at every positive-probability bin,
// mapped into voxel indices.
void lift_row(const FeatureImage& img, const DepthDistribution& dist,
              const CameraModel& cam, const RigidTransform& cam_to_ego,
              const GridSpec& spec, int v, std::vector<LiftContribution>& out) {
  const int ny = spec.ny(), nz = spec.nz();
  const int d_count = dist.bins.count;
  for (int u = 0; u < img.width; ++u) {
    const double* pd = &dist.p[(static_cast<size_t>(v) * img.width + u) * d_count];
    const double ray_x = (u + 0.5 - cam.cx) / cam.fx;
    const double ray_y = (v + 0.5 - cam.cy) / cam.fy;
    for (int d = 0; d < d_count; ++d) {
      if (!(pd[d] > 0.0)) continue;
      const double z = dist.bins.center(d);
      const Vec3 p_ego = cam_to_ego.apply(Vec3(ray_x * z, ray_y * z, z));
      const int ix = spec.cell_x(p_ego.x()), iy = spec.cell_y(p_ego.y()),
                iz = spec.cell_z(p_ego.z());
      if (ix < 0 || iy < 0 || iz < 0) continue;
      out.push_back({(static_cast<int64_t>(ix) * ny + iy) * nz + iz, u, pd[d]});
    }
  }
}

}  // namespace

void lift_accumulate(VoxelGrid& acc, const FeatureImage& img, const DepthDistribution& dist,
                     const CameraModel& camera, Exec exec) {
  if (dist.height != img.height || dist.width != img.width)
    throw std::invalid_argument("lift: distribution/image shape mismatch");
  if (acc.channels != img.channels)
    throw std::invalid_argument("lift: accumulator channel mismatch");
  const RigidTransform cam_to_ego = camera.pose.inverse();
  const int c = img.channels;

  std::vector<std::vector<LiftContribution>> rows(img.height);
  if (exec == Exec::serial) {
    for (int v = 0; v < img.height; ++v)
      lift_row(img, dist, camera, cam_to_ego, acc.spec, v, rows[v]);
  } else {
#pragma omp parallel for schedule(static)
    for (int v = 0; v < img.height; ++v)
      lift_row(img, dist, camera, cam_to_ego, acc.spec, v, rows[v]);
  }
  // Scatter in row order so the accumulation order never depends on threading.
  for (int v = 0; v < img.height; ++v) {
    for (const LiftContribution& lc : rows[v]) {
      double* dst = &acc.data[static_cast<size_t>(lc.voxel) * c];
      const double* f = &img.grid[(static_cast<size_t>(v) * img.width + lc.u) * c];
      for (int k = 0; k < c; ++k) dst[k] += lc.weight * f[k];
    }
  }
}

VoxelGrid lift_camera_features(const FeatureImage& img, const DepthDistribution& dist,
                               const CameraModel& camera, const GridSpec& spec, Exec exec) {
  spec.validate();
  VoxelGrid grid;
  grid.spec = spec;
  grid.channels = img.channels;
  for (const std::string& name : img.channel_names)
    grid.channel_names.push_back("cam/" + name);
  grid.data.assign(static_cast<size_t>(spec.nx()) * spec.ny() * spec.nz() * img.channels,
                   0.0);
  lift_accumulate(grid, img, dist, camera, exec);
  return grid;
}

// ---------------------------------------------------------------------------
// Pooling and fusion

BEVGrid bev_pool(const VoxelGrid& grid, Exec exec) {
  BEVGrid bev;
  bev.spec = grid.spec;
  bev.channels = grid.channels;
  bev.channel_names = grid.channel_names;
  const int nx = grid.spec.nx(), ny = grid.spec.ny(), nz = grid.spec.nz();
  const int c = grid.channels;
  bev.data.assign(static_cast<size_t>(nx) * ny * c, 0.0);

  const auto pool_column = [&](int x) {
    for (int y = 0; y < ny; ++y) {
      double* dst = &bev.data[(static_cast<size_t>(x) * ny + y) * c];
      for (int k = 0; k < c; ++k) {
        double sum = 0.0;
        for (int z = 0; z < nz; ++z) sum += grid.data[grid.index(x, y, z, k)];
        dst[k] = sum;
      }
    }
  };
  if (exec == Exec::serial) {
    for (int x = 0; x < nx; ++x) pool_column(x);
  } else {
#pragma omp parallel for schedule(static)
    for (int x = 0; x < nx; ++x) pool_column(x);
  }
  return bev;
}

BEVGrid fuse_bev(const BEVGrid& cam, const BEVGrid& lidar, int encoder_radius, Exec exec) {
  if (!cam.spec.same_bev_plane(lidar.spec))
    throw std::invalid_argument("fuse_bev: BEV grid specs differ");
  if (encoder_radius < 0) throw std::invalid_argument("fuse_bev: bad encoder radius");

  BEVGrid fused;
  fused.spec = cam.spec;
  fused.channels = cam.channels + lidar.channels;
  fused.channel_names = cam.channel_names;
  fused.channel_names.insert(fused.channel_names.end(), lidar.channel_names.begin(),
                             lidar.channel_names.end());
  const int nx = fused.spec.nx(), ny = fused.spec.ny();
  fused.data.resize(static_cast<size_t>(nx) * ny * fused.channels);
  for (size_t cell = 0; cell < static_cast<size_t>(nx) * ny; ++cell) {
    double* dst = &fused.data[cell * fused.channels];
    const double* a = cam.channels ? &cam.data[cell * cam.channels] : nullptr;
    const double* b = lidar.channels ? &lidar.data[cell * lidar.channels] : nullptr;
    for (int k = 0; k < cam.channels; ++k) dst[k] = a[k];
    for (int k = 0; k < lidar.channels; ++k) dst[cam.channels + k] = b[k];
  }
  if (encoder_radius > 0 && fused.channels > 0)
    fused.data = box_smooth(fused.data, nx, ny, fused.channels, encoder_radius, exec);
  return fused;
}

BEVGrid empty_bev(const GridSpec& spec) {
  BEVGrid bev;
  bev.spec = spec;
  return bev;
}

BEVGrid lidar_bev(const PointCloud& cloud, const PipelineConfig& cfg, Exec exec) {
  return bev_pool(voxelize(cloud, cfg.grid, exec), exec);
}

BEVGrid camera_bev(const std::vector<FeatureImage>& images,
                   const std::vector<CameraModel>& cameras, const PipelineConfig& cfg,
                   Exec exec) {
  if (images.empty()) throw std::invalid_argument("camera_bev: no images");
  VoxelGrid acc;
  acc.spec = cfg.grid;
  acc.channels = images.front().channels;
  for (const std::string& name : images.front().channel_names)
    acc.channel_names.push_back("cam/" + name);
  acc.data.assign(
      static_cast<size_t>(cfg.grid.nx()) * cfg.grid.ny() * cfg.grid.nz() * acc.channels, 0.0);
  for (const FeatureImage& img : images) {
    const CameraModel* cam = nullptr;
    for (const CameraModel& c : cameras)
      if (c.id == img.camera_id) cam = &c;
    if (!cam) throw std::invalid_argument("camera_bev: no camera model for " + img.camera_id);
    const DepthDistribution dist =
        estimate_depth_distribution(img, cfg.bins, cfg.depth_mode, cfg.tau, exec);
    lift_accumulate(acc, img, dist, *cam, exec);
  }
  return bev_pool(acc, exec);
}

BEVGrid run_pipeline(const std::vector<FeatureImage>& images,
                     const std::vector<CameraModel>& cameras, const PointCloud& cloud,
                     const PipelineConfig& cfg, SensorMode mode, Exec exec) {
  cfg.validate();
  const bool use_lidar = mode == SensorMode::L || mode == SensorMode::CL;
  const bool use_camera = mode == SensorMode::C || mode == SensorMode::CL;
  const BEVGrid lid = use_lidar ? lidar_bev(cloud, cfg, exec) : empty_bev(cfg.grid);
  const BEVGrid cam = use_camera ? camera_bev(images, cameras, cfg, exec) : empty_bev(cfg.grid);
  return fuse_bev(cam, lid, cfg.encoder_radius, exec);
}

// ---------------------------------------------------------------------------
// Debug dump

void save_bev_grid(const std::string& path, const BEVGrid& grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write("BVBG", 4);
  const uint32_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), 4);
  const double spec[9] = {grid.spec.x_min, grid.spec.x_max, grid.spec.y_min,
                          grid.spec.y_max, grid.spec.z_min, grid.spec.z_max,
                          grid.spec.rx,    grid.spec.ry,    grid.spec.rz};
  out.write(reinterpret_cast<const char*>(spec), sizeof(spec));
  const uint32_t dims[3] = {static_cast<uint32_t>(grid.spec.nx()),
                            static_cast<uint32_t>(grid.spec.ny()),
                            static_cast<uint32_t>(grid.channels)};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(reinterpret_cast<const char*>(grid.data.data()),
            static_cast<std::streamsize>(grid.data.size() * sizeof(double)));
  if (!out) throw std::runtime_error("write failed: " + path);

  nlohmann::json manifest;
  manifest["format"] = "bevbench-bev-channels/1";
  manifest["channel_names"] = grid.channel_names;
  std::ofstream side(path + ".channels.json");
  if (!side) throw std::runtime_error("cannot open for writing: " + path + ".channels.json");
  side << manifest.dump(2) << "\n";
}

BEVGrid load_bev_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open BEV grid: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "BVBG", 4) != 0)
    throw std::runtime_error("not a BVBG file: " + path);
  uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  if (version != 1) throw std::runtime_error("unsupported BVBG version in " + path);
  double spec[9];
  in.read(reinterpret_cast<char*>(spec), sizeof(spec));
  uint32_t dims[3];
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in) throw std::runtime_error("truncated file: " + path);

  BEVGrid grid;
  grid.spec = {spec[0], spec[1], spec[2], spec[3], spec[4],
               spec[5], spec[6], spec[7], spec[8]};
  grid.channels = static_cast<int>(dims[2]);
  grid.data.resize(static_cast<size_t>(dims[0]) * dims[1] * dims[2]);
  in.read(reinterpret_cast<char*>(grid.data.data()),
          static_cast<std::streamsize>(grid.data.size() * sizeof(double)));
  if (!in) throw std::runtime_error("truncated file: " + path);

  std::ifstream side(path + ".channels.json");
  if (side) {
    const nlohmann::json manifest = nlohmann::json::parse(side);
    grid.channel_names = manifest.value("channel_names", std::vector<std::string>{});
  }
  return grid;
}

}  // namespace bevbench::bevpipe
