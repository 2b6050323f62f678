#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "bevbench/rng.hpp"
#include "bevbench/sensors.hpp"
#include "oracles.hpp"

using namespace bevbench;
using namespace bevbench::scene;
using namespace bevbench::sensors;

namespace {

Scene bare_scene() {
  SceneGenConfig cfg;
  cfg.count_min = cfg.count_max = 0;
  return generate_scene(cfg, 1);
}

ObjectBox make_box(int id, const std::string& cls, const Vec3& center, const Vec3& size,
                   double yaw) {
  ObjectBox b;
  b.id = id;
  b.class_label = cls;
  b.center = center;
  b.size = size;
  b.yaw = yaw;
  return b;
}

// Expected object point count for the sampling model: per visible face,
// area * density * (10 / distance-to-face-center)^2.
double expected_count(const Scene& s, const ObjectBox& box) {
  const Vec3 origin = s.lidar.pose.origin_in_source();
  const Mat3 R = rot_z(box.yaw);
  const double w = box.size.x(), l = box.size.y(), h = box.size.z();
  struct F {
    Vec3 c_local, n_local;
    double area;
  };
  const std::vector<F> faces = {
      {{w / 2, 0, 0}, {1, 0, 0}, l * h},   {{-w / 2, 0, 0}, {-1, 0, 0}, l * h},
      {{0, l / 2, 0}, {0, 1, 0}, w * h},   {{0, -l / 2, 0}, {0, -1, 0}, w * h},
      {{0, 0, h / 2}, {0, 0, 1}, w * l}};
  double total = 0.0;
  for (const F& f : faces) {
    const Vec3 c = R * f.c_local + box.center;
    const Vec3 n = R * f.n_local;
    if (n.dot(origin - c) <= 0.0) continue;
    const double d = (origin - c).norm();
    total += f.area * s.lidar.points_per_m2_at_10m * 100.0 / (d * d);
  }
  return total;
}

}  // namespace

TEST_CASE("render_lidar empty scene gives empty cloud") {
  RenderConfig cfg;
  cfg.ground.enabled = false;
  CHECK(render_lidar(bare_scene(), 3, cfg).points.empty());
}

TEST_CASE("render_lidar box beyond max range yields no points") {
  Scene s = bare_scene();
  s.lidar.max_range = 20.0;
  s.objects.push_back(make_box(0, "car", Vec3(40, 0, 0.85), Vec3(1.9, 4.6, 1.7), 0.2));
  const PointCloud cloud = render_lidar(s, 5, {});
  CHECK(cloud.points.empty());
}

TEST_CASE("render_lidar expected count matches Poisson statistics") {
  Scene s = bare_scene();
  s.lidar.points_per_m2_at_10m = 50.0;
  s.objects.push_back(make_box(0, "car", Vec3(10, 0, 0.75), Vec3(2, 4, 1.5), 0.0));
  const double lambda = expected_count(s, s.objects[0]);

  size_t total = 0;
  const int runs = 100;
  for (int i = 0; i < runs; ++i) total += render_lidar(s, 1000 + i, {}).points.size();
  // Sum over runs ~ Poisson(runs * lambda); 3 sigma band.
  const double mean = runs * lambda;
  CHECK(std::abs(static_cast<double>(total) - mean) <= 3.0 * std::sqrt(mean));
}

TEST_CASE("render_lidar count decreases with distance") {
  double mean_at[3] = {0, 0, 0};
  const double dist[3] = {10, 20, 40};
  for (int k = 0; k < 3; ++k) {
    Scene s = bare_scene();
    s.objects.push_back(make_box(0, "car", Vec3(dist[k], 0, 0.75), Vec3(2, 4, 1.5), 0.0));
    for (int i = 0; i < 200; ++i)
      mean_at[k] += static_cast<double>(render_lidar(s, 10 * i, {}).points.size()) / 200.0;
  }
  CHECK(mean_at[0] > mean_at[1]);
  CHECK(mean_at[1] > mean_at[2]);
}

TEST_CASE("render_lidar points lie on box surfaces and carry valid fields") {
  Scene s = bare_scene();
  s.objects.push_back(make_box(0, "car", Vec3(12, -3, 0.8), Vec3(1.8, 4.2, 1.6), 0.7));
  s.objects.push_back(make_box(1, "pedestrian", Vec3(-8, 6, 0.9), Vec3(0.7, 0.7, 1.8), -1.2));
  const PointCloud cloud = render_lidar(s, 77, {});
  REQUIRE(!cloud.points.empty());
  const Vec3 origin = s.lidar.pose.origin_in_source();
  for (const LidarPoint& p : cloud.points) {
    REQUIRE(p.object_id >= 0);
    const Vec3 q(p.x, p.y, p.z);
    CHECK(oracles::distance_to_box_surface(q, s.objects[p.object_id]) < 1e-6);
    CHECK((q - origin).norm() <= s.lidar.max_range + 1e-6);
    CHECK(p.intensity >= 0.0f);
    CHECK(p.intensity <= 1.0f);
  }
}

TEST_CASE("render_lidar ground annulus") {
  Scene s = bare_scene();
  RenderConfig cfg;
  cfg.ground.enabled = true;
  cfg.ground.r_min = 4.0;
  cfg.ground.r_max = 30.0;
  cfg.ground.density_scale = 0.02;
  const PointCloud cloud = render_lidar(s, 9, cfg);
  REQUIRE(!cloud.points.empty());
  for (const LidarPoint& p : cloud.points) {
    CHECK(p.object_id == kGroundId);
    CHECK(p.z == 0.0f);
    const double r = std::hypot(p.x, p.y);
    CHECK(r >= cfg.ground.r_min - 1e-5);
    CHECK(r <= cfg.ground.r_max + 1e-5);
  }
}

TEST_CASE("render_cameras empty scene gives zero images") {
  const auto images = render_cameras(bare_scene(), {});
  REQUIRE(images.size() == 6);
  for (const FeatureImage& img : images) {
    img.validate();
    for (double v : img.grid) CHECK(v == 0.0);
    for (double v : img.depth) CHECK(v == 0.0);
  }
}

TEST_CASE("render_cameras on-axis box projects around the principal point") {
  Scene s = bare_scene();
  // Box straight ahead of the forward camera, nearest face at x = 9.
  s.objects.push_back(make_box(0, "car", Vec3(10, 0, 1.6), Vec3(2, 2, 1.0), 0.0));
  const auto images = render_cameras(s, {});
  const FeatureImage& img = images[0];
  img.validate();
  const int occ = img.occupancy_channel();

  double u_sum = 0, v_sum = 0;
  int count = 0;
  for (int v = 0; v < img.height; ++v)
    for (int u = 0; u < img.width; ++u)
      if (img.at(v, u, occ) > 0) {
        u_sum += u + 0.5;
        v_sum += v + 0.5;
        ++count;
      }
  REQUIRE(count > 0);
  const CameraModel& cam = s.cameras[0];
  CHECK(std::abs(u_sum / count - cam.cx) < 1.5);
  CHECK(std::abs(v_sum / count - cam.cy) < 1.5);

  const int cu = static_cast<int>(cam.cx), cv = static_cast<int>(cam.cy);
  REQUIRE(img.at(cv, cu, occ) > 0);
  CHECK(img.depth_at(cv, cu) == doctest::Approx(9.0).epsilon(0.012));
}

TEST_CASE("render_cameras z-buffer keeps the nearer box") {
  Scene s = bare_scene();
  s.objects.push_back(make_box(0, "car", Vec3(15, 0, 1.6), Vec3(2, 2, 1.2), 0.0));
  s.objects.push_back(make_box(1, "truck", Vec3(5, 0, 1.6), Vec3(1, 1, 1.2), 0.0));
  const auto images = render_cameras(s, {});
  const FeatureImage& img = images[0];
  const CameraModel& cam = s.cameras[0];
  const int cu = static_cast<int>(cam.cx), cv = static_cast<int>(cam.cy);
  REQUIRE(img.depth_at(cv, cu) > 0);
  CHECK(img.depth_at(cv, cu) < 5.0);  // near truck face at 4.5 m
  const int occ = img.occupancy_channel();
  CHECK(img.at(cv, cu, occ) == 1.0);
  // class one-hot points at the nearer object (truck = channel 2)
  CHECK(img.at(cv, cu, 2) == 1.0);
  CHECK(img.at(cv, cu, 0) == 0.0);
}

TEST_CASE("render_cameras is a pure function") {
  SceneGenConfig cfg;
  cfg.count_min = cfg.count_max = 6;
  const Scene s = generate_scene(cfg, 404);
  const auto a = render_cameras(s, {});
  const auto b = render_cameras(s, {});
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].grid == b[i].grid);
    CHECK(a[i].depth == b[i].depth);
  }
}

TEST_CASE("rendered images satisfy depth/occupancy coupling") {
  SceneGenConfig cfg;
  cfg.count_min = cfg.count_max = 8;
  const Scene s = generate_scene(cfg, 2024);
  for (const FeatureImage& img : render_cameras(s, {})) img.validate();
}

TEST_CASE("point cloud file round trip") {
  Scene s = bare_scene();
  s.objects.push_back(make_box(0, "car", Vec3(9, 2, 0.8), Vec3(1.9, 4.6, 1.6), 0.4));
  const PointCloud cloud = render_lidar(s, 55, {});
  REQUIRE(!cloud.points.empty());

  const std::string path =
      (std::filesystem::temp_directory_path() / "bevbench_test_cloud.bvpc").string();
  save_point_cloud(path, cloud);
  const PointCloud back = load_point_cloud(path);
  REQUIRE(back.points.size() == cloud.points.size());
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    CHECK(back.points[i].x == cloud.points[i].x);
    CHECK(back.points[i].y == cloud.points[i].y);
    CHECK(back.points[i].z == cloud.points[i].z);
    CHECK(back.points[i].intensity == cloud.points[i].intensity);
    CHECK(back.points[i].object_id == cloud.points[i].object_id);
  }
  std::filesystem::remove(path);
  std::filesystem::remove(path + ".ids.json");
}

TEST_CASE("feature image file round trip") {
  Scene s = bare_scene();
  s.objects.push_back(make_box(0, "truck", Vec3(14, 1, 1.5), Vec3(2.5, 7, 3), 1.0));
  const auto images = render_cameras(s, {});
  const std::string path =
      (std::filesystem::temp_directory_path() / "bevbench_test_img.bvfi").string();
  save_feature_image(path, images[0]);
  const FeatureImage back = load_feature_image(path);
  CHECK(back.camera_id == images[0].camera_id);
  CHECK(back.channel_names == images[0].channel_names);
  CHECK(back.grid == images[0].grid);
  CHECK(back.depth == images[0].depth);
  std::filesystem::remove(path);
}
