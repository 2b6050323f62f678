#include "bevbench/scene.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "bevbench/rng.hpp"

namespace bevbench::scene {

using nlohmann::json;

void ObjectBox::validate() const {
  if (!(size.x() > 0.0 && size.y() > 0.0 && size.z() > 0.0))
    throw std::invalid_argument("ObjectBox: size components must be > 0");
  if (!(yaw > -M_PI && yaw <= M_PI))
    throw std::invalid_argument("ObjectBox: yaw outside (-pi, pi]");
  if (class_label.empty()) throw std::invalid_argument("ObjectBox: empty class label");
  for (int i = 0; i < 3; ++i)
    if (!std::isfinite(center[i]) || !std::isfinite(size[i]))
      throw std::invalid_argument("ObjectBox: non-finite field");
}

void CameraModel::validate() const {
  if (!(fx > 0.0 && fy > 0.0)) throw std::invalid_argument("CameraModel: fx, fy must be > 0");
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height))
    throw std::invalid_argument("CameraModel: principal point outside image");
  if (width <= 0 || height <= 0) throw std::invalid_argument("CameraModel: empty image");
  if (!pose.is_rotation(1e-9))
    throw std::invalid_argument("CameraModel: pose rotation not orthonormal");
}

void LidarModel::validate() const {
  if (!(max_range > 0.0)) throw std::invalid_argument("LidarModel: max_range must be > 0");
  if (!(points_per_m2_at_10m > 0.0))
    throw std::invalid_argument("LidarModel: density must be > 0");
  if (!pose.is_rotation(1e-9))
    throw std::invalid_argument("LidarModel: pose rotation not orthonormal");
}

void Scene::validate() const {
  if (cameras.empty()) throw std::invalid_argument("Scene: rig needs at least one camera");
  std::set<int> ids;
  for (const ObjectBox& b : objects) {
    b.validate();
    if (!ids.insert(b.id).second)
      throw std::invalid_argument("Scene: duplicate object id");
  }
  for (const CameraModel& c : cameras) c.validate();
  lidar.validate();
  if (!ego_pose.is_rotation(1e-9))
    throw std::invalid_argument("Scene: ego pose rotation not orthonormal");
}

std::vector<ClassSpec> default_classes() {
  return {
      {"car", Vec3(1.9, 4.6, 1.7), 0.50, false},
      {"pedestrian", Vec3(0.7, 0.7, 1.8), 0.20, false},
      {"truck", Vec3(2.5, 7.0, 3.0), 0.15, false},
      {"barrier", Vec3(2.3, 0.6, 1.1), 0.15, true},
  };
}

std::vector<std::string> class_names(const std::vector<ClassSpec>& classes) {
  std::vector<std::string> names;
  names.reserve(classes.size());
  for (const ClassSpec& c : classes) names.push_back(c.name);
  return names;
}

void SceneGenConfig::validate() const {
  if (count_min < 0 || count_max < count_min)
    throw std::invalid_argument("SceneGenConfig: bad object count range");
  if (!(extent > 0.0)) throw std::invalid_argument("SceneGenConfig: extent must be > 0");
  if (min_radius < 0.0 || speed_min < 0.0 || speed_max < speed_min)
    throw std::invalid_argument("SceneGenConfig: bad ranges");
  if (classes.empty()) throw std::invalid_argument("SceneGenConfig: no classes");
  if (n_cameras < 1) throw std::invalid_argument("SceneGenConfig: need >= 1 camera");
}

std::array<Vec3, 8> box_corners(const ObjectBox& box) {
  const Mat3 R = rot_z(box.yaw);
  const double hx = 0.5 * box.size.x(), hy = 0.5 * box.size.y(), hz = 0.5 * box.size.z();
  const std::array<Vec3, 8> local = {
      Vec3(-hx, -hy, -hz), Vec3(hx, -hy, -hz), Vec3(hx, hy, -hz), Vec3(-hx, hy, -hz),
      Vec3(-hx, -hy, hz),  Vec3(hx, -hy, hz),  Vec3(hx, hy, hz),  Vec3(-hx, hy, hz)};
  std::array<Vec3, 8> out;
  for (size_t i = 0; i < 8; ++i) out[i] = R * local[i] + box.center;
  return out;
}

std::array<Vec2, 4> bev_footprint(const ObjectBox& box) {
  const auto corners = box_corners(box);
  std::array<Vec2, 4> out;
  for (size_t i = 0; i < 4; ++i) out[i] = corners[i].head<2>();
  return out;
}

namespace {

void project_extent(const std::array<Vec2, 4>& rect, const Vec2& axis, double& lo,
                    double& hi) {
  lo = hi = rect[0].dot(axis);
  for (size_t i = 1; i < 4; ++i) {
    const double v = rect[i].dot(axis);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
}

}  // namespace

bool bev_rects_overlap(const std::array<Vec2, 4>& a, const std::array<Vec2, 4>& b) {
  // Separating-axis test; touching counts as separated (intersection area 0).
  const std::array<Vec2, 4> axes = {
      (a[1] - a[0]).normalized(), (a[3] - a[0]).normalized(),
      (b[1] - b[0]).normalized(), (b[3] - b[0]).normalized()};
  for (const Vec2& axis : axes) {
    double alo, ahi, blo, bhi;
    project_extent(a, axis, alo, ahi);
    project_extent(b, axis, blo, bhi);
    if (ahi <= blo || bhi <= alo) return false;
  }
  return true;
}

namespace {

std::vector<CameraModel> build_camera_ring(const SceneGenConfig& cfg) {
  std::vector<CameraModel> cams;
  const double f = (cfg.image_width / 2.0) / std::tan(0.5 * cfg.hfov_deg * M_PI / 180.0);
  for (int k = 0; k < cfg.n_cameras; ++k) {
    CameraModel cam;
    cam.id = "cam" + std::to_string(k);
    cam.fx = cam.fy = f;
    cam.cx = cfg.image_width / 2.0;
    cam.cy = cfg.image_height / 2.0;
    cam.width = cfg.image_width;
    cam.height = cfg.image_height;
    const double az = 2.0 * M_PI * k / cfg.n_cameras;
    const double c = std::cos(az), s = std::sin(az);
    // Camera axes in ego coords: x right, y down, z = view direction.
    Mat3 R;
    R << s, -c, 0.0,      // x_cam
        0.0, 0.0, -1.0,   // y_cam
        c, s, 0.0;        // z_cam
    const Vec3 center(0.0, 0.0, cfg.camera_height);
    cam.pose.R = R;
    cam.pose.t = -(R * center);
    cams.push_back(std::move(cam));
  }
  return cams;
}

}  // namespace

Scene generate_scene(const SceneGenConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);

  Scene s;
  s.scene_id = seed;
  s.seed = seed;
  s.cameras = build_camera_ring(cfg);
  s.lidar.pose.R = Mat3::Identity();
  s.lidar.pose.t = Vec3(0.0, 0.0, -cfg.lidar_height);
  s.lidar.max_range = cfg.lidar_max_range;
  s.lidar.points_per_m2_at_10m = cfg.lidar_density;

  const int count =
      cfg.count_min +
      static_cast<int>(rng.uniform_int(static_cast<uint64_t>(cfg.count_max - cfg.count_min) + 1));

  double total_weight = 0.0;
  for (const ClassSpec& c : cfg.classes) total_weight += c.weight;

  std::vector<std::array<Vec2, 4>> placed;
  for (int i = 0; i < count; ++i) {
    // Class, size and speed are drawn once; pose is rejection-sampled.
    double pick = rng.uniform01() * total_weight;
    size_t ci = 0;
    for (; ci + 1 < cfg.classes.size(); ++ci) {
      if (pick < cfg.classes[ci].weight) break;
      pick -= cfg.classes[ci].weight;
    }
    const ClassSpec& cls = cfg.classes[ci];
    Vec3 size;
    for (int d = 0; d < 3; ++d)
      size[d] = cls.size_prior[d] * (1.0 + cfg.size_jitter * (2.0 * rng.uniform01() - 1.0));
    const double speed = rng.uniform(cfg.speed_min, cfg.speed_max);

    ObjectBox box;
    box.id = i;
    box.class_label = cls.name;
    box.size = size;

    bool ok = false;
    for (int attempt = 0; attempt < cfg.max_attempts_per_object; ++attempt) {
      box.yaw = wrap_angle(rng.uniform(-M_PI, M_PI));
      const double x = rng.uniform(-cfg.extent, cfg.extent);
      const double y = rng.uniform(-cfg.extent, cfg.extent);
      if (std::hypot(x, y) < cfg.min_radius) continue;
      box.center = Vec3(x, y, 0.5 * size.z());

      const auto rect = bev_footprint(box);
      bool inside = true;
      for (const Vec2& c : rect)
        inside = inside && std::abs(c.x()) <= cfg.extent && std::abs(c.y()) <= cfg.extent;
      if (!inside) continue;

      bool hits = false;
      for (const auto& other : placed) {
        if (bev_rects_overlap(rect, other)) {
          hits = true;
          break;
        }
      }
      if (hits) continue;

      placed.push_back(rect);
      ok = true;
      break;
    }
    if (!ok)
      throw std::runtime_error(
          "placement infeasible: could not place object " + std::to_string(i) + " of " +
          std::to_string(count) + " within extent +/-" + std::to_string(cfg.extent) + " m");

    // Heading is the +length axis of the box.
    box.velocity = speed * Vec2(-std::sin(box.yaw), std::cos(box.yaw));
    s.objects.push_back(std::move(box));
  }

  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// JSON serialization

namespace {

json vec_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
json vec_to_json(const Vec2& v) { return json::array({v.x(), v.y()}); }

Vec3 vec3_from_json(const json& j) { return Vec3(j.at(0), j.at(1), j.at(2)); }
Vec2 vec2_from_json(const json& j) { return Vec2(j.at(0), j.at(1)); }

json pose_to_json(const RigidTransform& t) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) rows.push_back(json::array({t.R(r, 0), t.R(r, 1), t.R(r, 2)}));
  return json{{"rotation", rows}, {"translation", vec_to_json(t.t)}};
}

RigidTransform pose_from_json(const json& j) {
  RigidTransform t;
  const json& rows = j.at("rotation");
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) t.R(r, c) = rows.at(r).at(c);
  t.t = vec3_from_json(j.at("translation"));
  return t;
}

}  // namespace

std::string scene_to_json(const Scene& s) {
  json j;
  j["format"] = "bevbench-scene/1";
  j["scene_id"] = s.scene_id;
  j["seed"] = s.seed;
  j["ego_pose"] = pose_to_json(s.ego_pose);
  json objs = json::array();
  for (const ObjectBox& b : s.objects) {
    objs.push_back(json{{"id", b.id},
                        {"class", b.class_label},
                        {"center", vec_to_json(b.center)},
                        {"size", vec_to_json(b.size)},
                        {"yaw", b.yaw},
                        {"velocity", vec_to_json(b.velocity)}});
  }
  j["objects"] = std::move(objs);
  json cams = json::array();
  for (const CameraModel& c : s.cameras) {
    cams.push_back(json{{"id", c.id},
                        {"fx", c.fx},
                        {"fy", c.fy},
                        {"cx", c.cx},
                        {"cy", c.cy},
                        {"width", c.width},
                        {"height", c.height},
                        {"pose", pose_to_json(c.pose)}});
  }
  j["cameras"] = std::move(cams);
  j["lidar"] = json{{"pose", pose_to_json(s.lidar.pose)},
                    {"max_range", s.lidar.max_range},
                    {"points_per_m2_at_10m", s.lidar.points_per_m2_at_10m}};
  return j.dump(2);
}

Scene scene_from_json(const std::string& text) {
  const json j = json::parse(text);
  if (j.value("format", "") != "bevbench-scene/1")
    throw std::runtime_error("scene JSON: unexpected format tag");
  Scene s;
  s.scene_id = j.at("scene_id");
  s.seed = j.at("seed");
  s.ego_pose = pose_from_json(j.at("ego_pose"));
  for (const json& jb : j.at("objects")) {
    ObjectBox b;
    b.id = jb.at("id");
    b.class_label = jb.at("class");
    b.center = vec3_from_json(jb.at("center"));
    b.size = vec3_from_json(jb.at("size"));
    b.yaw = jb.at("yaw");
    b.velocity = vec2_from_json(jb.at("velocity"));
    s.objects.push_back(std::move(b));
  }
  for (const json& jc : j.at("cameras")) {
    CameraModel c;
    c.id = jc.at("id");
    c.fx = jc.at("fx");
    c.fy = jc.at("fy");
    c.cx = jc.at("cx");
    c.cy = jc.at("cy");
    c.width = jc.at("width");
    c.height = jc.at("height");
    c.pose = pose_from_json(jc.at("pose"));
    s.cameras.push_back(std::move(c));
  }
  const json& jl = j.at("lidar");
  s.lidar.pose = pose_from_json(jl.at("pose"));
  s.lidar.max_range = jl.at("max_range");
  s.lidar.points_per_m2_at_10m = jl.at("points_per_m2_at_10m");
  s.validate();
  return s;
}

void save_scene(const std::string& path, const Scene& s) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << scene_to_json(s) << "\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

Scene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scene file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return scene_from_json(buf.str());
}

}  // namespace bevbench::scene
