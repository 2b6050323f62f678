#include "bevbench/sensors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "bevbench/rng.hpp"

namespace bevbench::sensors {

using scene::CameraModel;
using scene::ObjectBox;
using scene::Scene;

int FeatureImage::occupancy_channel() const {
  for (int c = 0; c < channels; ++c)
    if (channel_names[c] == "occupancy") return c;
  throw std::invalid_argument("FeatureImage: no occupancy channel");
}

void FeatureImage::validate() const {
  if (grid.size() != static_cast<size_t>(height) * width * channels ||
      depth.size() != static_cast<size_t>(height) * width ||
      channel_names.size() != static_cast<size_t>(channels))
    throw std::invalid_argument("FeatureImage: inconsistent shape");
  const int occ = occupancy_channel();
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      for (int c = 0; c < channels; ++c)
        if (!(at(v, u, c) >= 0.0)) throw std::invalid_argument("FeatureImage: negative value");
      const bool occupied = at(v, u, occ) > 0.0;
      if (occupied != (depth_at(v, u) > 0.0))
        throw std::invalid_argument("FeatureImage: depth/occupancy mismatch");
    }
  }
}

namespace {

// One rectangular box face: center/axes in box-local coordinates.
struct Face {
  Vec3 center, normal, u_axis, v_axis;
  double half_u, half_v;
  double area() const { return 4.0 * half_u * half_v; }
};

std::array<Face, 5> box_faces(const ObjectBox& b) {
  const double hx = 0.5 * b.size.x(), hy = 0.5 * b.size.y(), hz = 0.5 * b.size.z();
  return {{
      {{hx, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, hy, hz},
      {{-hx, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, 0, 1}, hy, hz},
      {{0, hy, 0}, {0, 1, 0}, {1, 0, 0}, {0, 0, 1}, hx, hz},
      {{0, -hy, 0}, {0, -1, 0}, {1, 0, 0}, {0, 0, 1}, hx, hz},
      {{0, 0, hz}, {0, 0, 1}, {1, 0, 0}, {0, 1, 0}, hx, hy},  // top
  }};
}

struct WorldFace {
  Vec3 center, normal, u_axis, v_axis;
  double half_u, half_v, area;
};

WorldFace to_world(const Face& f, const Mat3& R, const Vec3& t) {
  return {R * f.center + t, R * f.normal, R * f.u_axis, R * f.v_axis,
          f.half_u,         f.half_v,     f.area()};
}

}  // namespace

PointCloud render_lidar(const Scene& s, uint64_t seed, const RenderConfig& cfg) {
  s.validate();
  Rng rng(seed);
  PointCloud cloud;
  const Vec3 origin = s.lidar.pose.origin_in_source();
  const double max_range = s.lidar.max_range;
  const double density = s.lidar.points_per_m2_at_10m;

  for (const ObjectBox& box : s.objects) {
    const Mat3 R = rot_z(box.yaw);
    // All five exposed faces (4 sides + top; the bottom is never visible)
    // sample points, so the evidence stays centered on the box.
    for (const Face& f : box_faces(box)) {
      const WorldFace wf = to_world(f, R, box.center);
      const double d = std::max((origin - wf.center).norm(), 0.5);
      const double lambda = wf.area * density * 100.0 / (d * d);
      const uint64_t n = rng.poisson(lambda);
      for (uint64_t i = 0; i < n; ++i) {
        const double a = rng.uniform(-wf.half_u, wf.half_u);
        const double b = rng.uniform(-wf.half_v, wf.half_v);
        const Vec3 p = wf.center + a * wf.u_axis + b * wf.v_axis;
        const double dist = (p - origin).norm();
        if (dist > max_range) continue;
        LidarPoint lp;
        lp.x = static_cast<float>(p.x());
        lp.y = static_cast<float>(p.y());
        lp.z = static_cast<float>(p.z());
        lp.intensity = static_cast<float>(std::max(0.0, 1.0 - dist / max_range));
        lp.object_id = box.id;
        cloud.points.push_back(lp);
      }
    }
  }

  const GroundConfig& g = cfg.ground;
  if (g.enabled && g.r_max > g.r_min && g.r_min > 0.0) {
    const double log_ratio = std::log(g.r_max / g.r_min);
    const double lambda = density * g.density_scale * 100.0 * 2.0 * M_PI * log_ratio;
    const uint64_t n = rng.poisson(lambda);
    for (uint64_t i = 0; i < n; ++i) {
      const double r = g.r_min * std::exp(rng.uniform01() * log_ratio);
      const double theta = rng.uniform(0.0, 2.0 * M_PI);
      const Vec3 p(origin.x() + r * std::cos(theta), origin.y() + r * std::sin(theta), 0.0);
      const double dist = (p - origin).norm();
      if (dist > max_range) continue;
      LidarPoint lp;
      lp.x = static_cast<float>(p.x());
      lp.y = static_cast<float>(p.y());
      lp.z = static_cast<float>(p.z());
      lp.intensity = static_cast<float>(std::max(0.0, 1.0 - dist / max_range));
      lp.object_id = kGroundId;
      cloud.points.push_back(lp);
    }
  }
  return cloud;
}

std::vector<FeatureImage> render_cameras(const Scene& s, const RenderConfig& cfg) {
  s.validate();
  const int n_classes = static_cast<int>(cfg.classes.size());

  std::vector<FeatureImage> images;
  for (const CameraModel& cam : s.cameras) {
    const Vec3 cam_origin = cam.pose.origin_in_source();
    const size_t n_px = static_cast<size_t>(cam.height) * cam.width;
    std::vector<double> depth(n_px, 0.0);
    std::vector<int> winner(n_px, -1);

    for (const ObjectBox& box : s.objects) {
      int class_idx = -1;
      for (int k = 0; k < n_classes; ++k)
        if (cfg.classes[k] == box.class_label) class_idx = k;
      if (class_idx < 0)
        throw std::invalid_argument("render_cameras: class not in config: " + box.class_label);

      const Mat3 R = rot_z(box.yaw);
      for (const Face& f : box_faces(box)) {
        const WorldFace wf = to_world(f, R, box.center);
        if (wf.normal.dot(cam_origin - wf.center) <= 0.0) continue;

        // Cheap frustum rejection from the face corners.
        bool any_in_front = false, any_u_lo = false, any_u_hi = false;
        bool any_v_lo = false, any_v_hi = false;
        for (int cu = -1; cu <= 1; cu += 2) {
          for (int cv = -1; cv <= 1; cv += 2) {
            const Vec3 corner =
                wf.center + cu * wf.half_u * wf.u_axis + cv * wf.half_v * wf.v_axis;
            const Vec3 pc = cam.pose.apply(corner);
            if (pc.z() < cfg.z_near) continue;
            any_in_front = true;
            const double u = cam.fx * pc.x() / pc.z() + cam.cx;
            const double v = cam.fy * pc.y() / pc.z() + cam.cy;
            any_u_lo = any_u_lo || u >= 0.0;
            any_u_hi = any_u_hi || u < cam.width;
            any_v_lo = any_v_lo || v >= 0.0;
            any_v_hi = any_v_hi || v < cam.height;
          }
        }
        if (!any_in_front || !any_u_lo || !any_u_hi || !any_v_lo || !any_v_hi) continue;

        const double zc = std::max(cam.pose.apply(wf.center).z(), cfg.z_near);
        const double per_m = cfg.camera_oversample * std::max(cam.fx, cam.fy) / zc;
        const int nu = std::clamp(static_cast<int>(std::ceil(2.0 * wf.half_u * per_m)), 2,
                                  cfg.max_samples_per_edge);
        const int nv = std::clamp(static_cast<int>(std::ceil(2.0 * wf.half_v * per_m)), 2,
                                  cfg.max_samples_per_edge);
        for (int iu = 0; iu < nu; ++iu) {
          const double a = -wf.half_u + (iu + 0.5) * (2.0 * wf.half_u / nu);
          for (int iv = 0; iv < nv; ++iv) {
            const double b = -wf.half_v + (iv + 0.5) * (2.0 * wf.half_v / nv);
            const Vec3 pc = cam.pose.apply(wf.center + a * wf.u_axis + b * wf.v_axis);
            if (pc.z() < cfg.z_near) continue;
            const double u = cam.fx * pc.x() / pc.z() + cam.cx;
            const double v = cam.fy * pc.y() / pc.z() + cam.cy;
            const int px = static_cast<int>(std::floor(u));
            const int py = static_cast<int>(std::floor(v));
            if (px < 0 || px >= cam.width || py < 0 || py >= cam.height) continue;
            const size_t at = static_cast<size_t>(py) * cam.width + px;
            if (winner[at] < 0 || pc.z() < depth[at]) {
              depth[at] = pc.z();
              winner[at] = class_idx;
            }
          }
        }
      }
    }

    FeatureImage img;
    img.camera_id = cam.id;
    img.height = cam.height;
    img.width = cam.width;
    img.channels = n_classes + 1;
    for (const std::string& name : cfg.classes) img.channel_names.push_back("class/" + name);
    img.channel_names.push_back("occupancy");
    img.grid.assign(n_px * img.channels, 0.0);
    img.depth = depth;
    for (size_t at = 0; at < n_px; ++at) {
      if (winner[at] < 0) continue;
      img.grid[at * img.channels + winner[at]] = 1.0;
      img.grid[at * img.channels + n_classes] = 1.0;
    }
    images.push_back(std::move(img));
  }
  return images;
}

// ---------------------------------------------------------------------------
// File formats (little-endian host assumed)

namespace {

void write_bytes(std::ofstream& out, const void* p, size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_pod(std::ofstream& out, T v) {
  write_bytes(out, &v, sizeof(T));
}

void read_bytes(std::ifstream& in, void* p, size_t n, const std::string& path) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("truncated file: " + path);
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T v;
  read_bytes(in, &v, sizeof(T), path);
  return v;
}

void write_string(std::ofstream& out, const std::string& s) {
  write_pod<uint32_t>(out, static_cast<uint32_t>(s.size()));
  write_bytes(out, s.data(), s.size());
}

std::string read_string(std::ifstream& in, const std::string& path) {
  const uint32_t n = read_pod<uint32_t>(in, path);
  if (n > (1u << 20)) throw std::runtime_error("corrupt string length in " + path);
  std::string s(n, '\0');
  read_bytes(in, s.data(), n, path);
  return s;
}

}  // namespace

void save_point_cloud(const std::string& path, const PointCloud& cloud) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  write_bytes(out, "BVPC", 4);
  write_pod<uint32_t>(out, 1);
  write_pod<uint64_t>(out, cloud.points.size());
  for (const LidarPoint& p : cloud.points) {
    write_pod<float>(out, p.x);
    write_pod<float>(out, p.y);
    write_pod<float>(out, p.z);
    write_pod<float>(out, p.intensity);
  }
  if (!out) throw std::runtime_error("write failed: " + path);

  nlohmann::json sidecar;
  sidecar["format"] = "bevbench-cloud-ids/1";
  std::vector<int32_t> ids;
  ids.reserve(cloud.points.size());
  for (const LidarPoint& p : cloud.points) ids.push_back(p.object_id);
  sidecar["object_ids"] = std::move(ids);
  std::ofstream side(path + ".ids.json");
  if (!side) throw std::runtime_error("cannot open for writing: " + path + ".ids.json");
  side << sidecar.dump() << "\n";
}

PointCloud load_point_cloud(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open cloud file: " + path);
  char magic[4];
  read_bytes(in, magic, 4, path);
  if (std::memcmp(magic, "BVPC", 4) != 0)
    throw std::runtime_error("not a BVPC file: " + path);
  const uint32_t version = read_pod<uint32_t>(in, path);
  if (version != 1) throw std::runtime_error("unsupported BVPC version in " + path);
  const uint64_t count = read_pod<uint64_t>(in, path);
  PointCloud cloud;
  cloud.points.resize(count);
  for (uint64_t i = 0; i < count; ++i) {
    LidarPoint& p = cloud.points[i];
    p.x = read_pod<float>(in, path);
    p.y = read_pod<float>(in, path);
    p.z = read_pod<float>(in, path);
    p.intensity = read_pod<float>(in, path);
  }

  std::ifstream side(path + ".ids.json");
  if (side) {
    const nlohmann::json j = nlohmann::json::parse(side);
    const auto& ids = j.at("object_ids");
    if (ids.size() == count)
      for (uint64_t i = 0; i < count; ++i) cloud.points[i].object_id = ids.at(i);
  }
  return cloud;
}

void save_feature_image(const std::string& path, const FeatureImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  write_bytes(out, "BVFI", 4);
  write_pod<uint32_t>(out, 1);
  write_string(out, img.camera_id);
  write_pod<uint32_t>(out, static_cast<uint32_t>(img.height));
  write_pod<uint32_t>(out, static_cast<uint32_t>(img.width));
  write_pod<uint32_t>(out, static_cast<uint32_t>(img.channels));
  for (const std::string& name : img.channel_names) write_string(out, name);
  write_bytes(out, img.grid.data(), img.grid.size() * sizeof(double));
  write_bytes(out, img.depth.data(), img.depth.size() * sizeof(double));
  if (!out) throw std::runtime_error("write failed: " + path);
}

FeatureImage load_feature_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open feature image: " + path);
  char magic[4];
  read_bytes(in, magic, 4, path);
  if (std::memcmp(magic, "BVFI", 4) != 0)
    throw std::runtime_error("not a BVFI file: " + path);
  const uint32_t version = read_pod<uint32_t>(in, path);
  if (version != 1) throw std::runtime_error("unsupported BVFI version in " + path);
  FeatureImage img;
  img.camera_id = read_string(in, path);
  img.height = static_cast<int>(read_pod<uint32_t>(in, path));
  img.width = static_cast<int>(read_pod<uint32_t>(in, path));
  img.channels = static_cast<int>(read_pod<uint32_t>(in, path));
  for (int c = 0; c < img.channels; ++c) img.channel_names.push_back(read_string(in, path));
  img.grid.resize(static_cast<size_t>(img.height) * img.width * img.channels);
  img.depth.resize(static_cast<size_t>(img.height) * img.width);
  read_bytes(in, img.grid.data(), img.grid.size() * sizeof(double), path);
  read_bytes(in, img.depth.data(), img.depth.size() * sizeof(double), path);
  return img;
}

}  // namespace bevbench::sensors
