#include <doctest.h>

#include <cmath>

#include "bevbench/degrade.hpp"
#include "bevbench/detect.hpp"
#include "bevbench/rng.hpp"

using namespace bevbench;
using namespace bevbench::detect;
using bevbench::bevpipe::BEVGrid;
using bevbench::bevpipe::GridSpec;

namespace {

GridSpec detect_grid() {
  GridSpec g;
  g.x_min = g.y_min = -30;
  g.x_max = g.y_max = 30;
  g.z_min = -2;
  g.z_max = 3;
  g.rx = g.ry = 0.5;
  g.rz = 0.5;
  return g;
}

BEVGrid blank_bev(const GridSpec& g) {
  BEVGrid bev;
  bev.spec = g;
  bev.channels = 2;
  bev.channel_names = {"cam/class/car", "lidar/point_count"};
  bev.data.assign(static_cast<size_t>(g.nx()) * g.ny() * 2, 0.0);
  return bev;
}

DetectorParams quick_params() {
  DetectorParams p;
  p.class_priors = default_class_priors();
  p.peak_threshold = 0.5;
  p.nms_radius = 3.0;
  p.cluster_radius = 3.0;
  p.min_cluster_cells = 1;
  return p;
}

}  // namespace

TEST_CASE("center_heatmap: zero BEV gives zero heatmap") {
  const BEVGrid bev = blank_bev(detect_grid());
  const auto heat = center_heatmap(bev);
  for (double v : heat) CHECK(v == 0.0);
}

TEST_CASE("center_heatmap: impulse becomes a 3x3 plateau peaking at the cell") {
  BEVGrid bev = blank_bev(detect_grid());
  bev.at(20, 20, 1) = 9.0;
  const auto heat = center_heatmap(bev);
  const int ny = bev.spec.ny();
  double max_val = 0;
  for (double v : heat) max_val = std::max(max_val, v);
  CHECK(std::abs(heat[20 * ny + 20] - 1.0) <= 1e-12);
  CHECK(max_val == heat[20 * ny + 20]);
  for (int dx = -1; dx <= 1; ++dx)
    for (int dy = -1; dy <= 1; ++dy)
      CHECK(std::abs(heat[(20 + dx) * ny + 20 + dy] - 1.0) <= 1e-12);
  CHECK(heat[(22) * ny + 20] == 0.0);
}

TEST_CASE("center_heatmap: two distant impulses give two local maxima") {
  BEVGrid bev = blank_bev(detect_grid());
  bev.at(20, 20, 1) = 5.0;
  bev.at(20, 30, 1) = 4.0;  // 10 cells apart
  const auto heat = center_heatmap(bev);
  const int nx = bev.spec.nx(), ny = bev.spec.ny();

  // Argmax-scan oracle: local maxima (>= all 8 neighbours, > at least one).
  std::vector<std::pair<int, int>> maxima;
  for (int x = 0; x < nx; ++x)
    for (int y = 0; y < ny; ++y) {
      const double v = heat[static_cast<size_t>(x) * ny + y];
      if (v <= 0) continue;
      bool is_max = true;
      for (int dx = -1; dx <= 1 && is_max; ++dx)
        for (int dy = -1; dy <= 1; ++dy) {
          if (!dx && !dy) continue;
          const int i = x + dx, j = y + dy;
          if (i < 0 || i >= nx || j < 0 || j >= ny) continue;
          if (heat[static_cast<size_t>(i) * ny + j] > v) {
            is_max = false;
            break;
          }
        }
      if (is_max) maxima.emplace_back(x, y);
    }
  // The plateau makes ties; the strict cells are exactly the impulse cells.
  bool found_a = false, found_b = false;
  for (auto& m : maxima) {
    if (m.first == 20 && m.second == 20) found_a = true;
    if (m.first == 20 && m.second == 30) found_b = true;
  }
  CHECK(found_a);
  CHECK(found_b);
}

TEST_CASE("center_heatmap requires an occupancy-bearing channel") {
  BEVGrid bev = blank_bev(detect_grid());
  bev.channel_names = {"cam/class/car", "lidar/mean_intensity"};
  CHECK_THROWS_AS(center_heatmap(bev), std::invalid_argument);
}

TEST_CASE("extract_detections: all-zero BEV gives no detections") {
  const BEVGrid bev = blank_bev(detect_grid());
  const auto dets = extract_detections(bev, center_heatmap(bev), quick_params());
  CHECK(dets.empty());
}

TEST_CASE("extract_detections: single blob yields one detection with sane fields") {
  BEVGrid bev = blank_bev(detect_grid());
  // 2x4 m blob of lidar mass: cells (30..33) x (40..47) at 0.5 m pitch,
  // heavier in the middle so the peak is strict.
  for (int x = 30; x < 34; ++x)
    for (int y = 40; y < 48; ++y)
      bev.at(x, y, 1) = 2.0 + (x == 31 && y == 43 ? 1.0 : 0.0);
  const auto dets = extract_detections(bev, center_heatmap(bev), quick_params());
  REQUIRE(dets.size() == 1);
  const Detection& d = dets[0];
  // Centroid of the blob: x cells 30..33 -> center 32, y cells 40..48 -> 44.
  CHECK(std::abs(d.center.x() - bev.spec.center_x(31) - 0.25) < 0.3);
  CHECK(std::abs(d.center.y() - bev.spec.center_y(43) - 0.25) < 0.3);
  CHECK(d.score > 0.0);
  CHECK(d.score <= 1.0);
  CHECK(d.size.minCoeff() > 0.0);
  // Long axis along y => box yaw near 0 under the length-along-y convention.
  CHECK(std::abs(d.yaw) < 0.2);
  CHECK(d.velocity.norm() == 0.0);
}

TEST_CASE("extract_detections: principal-axis yaw of an axis-aligned cluster") {
  BEVGrid bev = blank_bev(detect_grid());
  // Long axis along x this time: 8 cells x 3 cells.
  for (int x = 40; x < 48; ++x)
    for (int y = 20; y < 23; ++y)
      bev.at(x, y, 1) = 1.0 + (x == 43 && y == 21 ? 0.5 : 0.0);
  const auto dets = extract_detections(bev, center_heatmap(bev), quick_params());
  REQUIRE(dets.size() == 1);
  // Major axis along x => yaw = -pi/2 folded into (-pi/2, pi/2], i.e. +-pi/2.
  CHECK(std::abs(std::abs(dets[0].yaw) - M_PI / 2) < 0.15);
  CHECK(dets[0].size.y() > dets[0].size.x());  // length exceeds width
}

TEST_CASE("extract_detections: class from summed class channels, ties to lowest index") {
  BEVGrid bev = blank_bev(detect_grid());
  bev.channel_names = {"cam/class/pedestrian", "lidar/point_count"};
  for (int x = 30; x < 33; ++x)
    for (int y = 30; y < 33; ++y) {
      bev.at(x, y, 1) = 1.0 + (x == 31 && y == 31 ? 0.5 : 0.0);
      bev.at(x, y, 0) = 0.2;  // pedestrian evidence
    }
  DetectorParams params = quick_params();
  auto dets = extract_detections(bev, center_heatmap(bev), params);
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].class_label == "pedestrian");

  // Without any class channel the tie resolves to the first prior.
  BEVGrid lidar_only = bev;
  lidar_only.channels = 1;
  lidar_only.channel_names = {"lidar/point_count"};
  lidar_only.data.assign(static_cast<size_t>(bev.spec.nx()) * bev.spec.ny(), 0.0);
  for (int x = 30; x < 33; ++x)
    for (int y = 30; y < 33; ++y)
      lidar_only.at(x, y, 0) = 1.0 + (x == 31 && y == 31 ? 0.5 : 0.0);
  dets = extract_detections(lidar_only, center_heatmap(lidar_only), params);
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].class_label == params.class_priors[0].name);
}

TEST_CASE("extract_detections: min_cluster_cells and peak_threshold filters") {
  BEVGrid bev = blank_bev(detect_grid());
  bev.at(20, 20, 1) = 9.0;  // single-cell cluster
  DetectorParams params = quick_params();
  params.min_cluster_cells = 2;
  CHECK(extract_detections(bev, center_heatmap(bev), params).empty());
  params.min_cluster_cells = 1;
  CHECK(extract_detections(bev, center_heatmap(bev), params).size() == 1);
  params.peak_threshold = 2.0;  // smoothed peak is 1.0 < 2.0
  CHECK(extract_detections(bev, center_heatmap(bev), params).empty());
}

TEST_CASE("extract_detections: NMS keeps the stronger of two close peaks") {
  BEVGrid bev = blank_bev(detect_grid());
  bev.at(20, 20, 1) = 9.0;
  bev.at(20, 24, 1) = 6.0;  // 2 m away at 0.5 m pitch
  DetectorParams params = quick_params();
  params.nms_radius = 3.0;
  const auto dets = extract_detections(bev, center_heatmap(bev), params);
  REQUIRE(dets.size() == 1);
  CHECK(std::abs(dets[0].center.y() - bev.spec.center_y(20)) < 1.3);

  params.nms_radius = 1.5;  // now both survive
  CHECK(extract_detections(bev, center_heatmap(bev), params).size() == 2);
}

TEST_CASE("extract_detections: output ordered by descending score") {
  BEVGrid bev = blank_bev(detect_grid());
  bev.at(10, 10, 1) = 3.0;
  bev.at(40, 40, 1) = 9.0;
  bev.at(25, 50, 1) = 6.0;
  const auto dets = extract_detections(bev, center_heatmap(bev), quick_params());
  REQUIRE(dets.size() == 3);
  CHECK(dets[0].score >= dets[1].score);
  CHECK(dets[1].score >= dets[2].score);
}

TEST_CASE("extract_detections: deterministic and exec-independent") {
  Rng rng(2025);
  BEVGrid bev = blank_bev(detect_grid());
  for (double& v : bev.data) v = rng.uniform01() < 0.02 ? rng.uniform(0.5, 8.0) : 0.0;
  const auto heat_s = center_heatmap(bev, Exec::serial);
  const auto heat_p = center_heatmap(bev, Exec::parallel);
  CHECK(heat_s == heat_p);
  const auto a = extract_detections(bev, heat_s, quick_params());
  const auto b = extract_detections(bev, heat_p, quick_params());
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].center == b[i].center);
    CHECK(a[i].score == b[i].score);
    CHECK(a[i].class_label == b[i].class_label);
  }
}

TEST_CASE("extract_detections: translation equivariance by one cell") {
  BEVGrid bev = blank_bev(detect_grid());
  for (int x = 24; x < 28; ++x)
    for (int y = 30; y < 36; ++y)
      bev.at(x, y, 1) = 1.0 + (x == 25 && y == 32 ? 0.7 : 0.0);
  BEVGrid shifted = bev;
  std::fill(shifted.data.begin(), shifted.data.end(), 0.0);
  for (int x = 24; x < 28; ++x)
    for (int y = 30; y < 36; ++y)
      shifted.at(x + 1, y, 1) = bev.at(x, y, 1);

  const auto a = extract_detections(bev, center_heatmap(bev), quick_params());
  const auto b = extract_detections(shifted, center_heatmap(shifted), quick_params());
  REQUIRE(a.size() == 1);
  REQUIRE(b.size() == 1);
  CHECK(std::abs(b[0].center.x() - a[0].center.x() - bev.spec.rx) <= 1e-9);
  CHECK(std::abs(b[0].center.y() - a[0].center.y()) <= 1e-9);
  CHECK(b[0].score == a[0].score);
}

TEST_CASE("detections JSON round trip") {
  Detection d;
  d.center = Vec2(3.25, -7.5);
  d.z = 0.85;
  d.size = Vec3(1.9, 4.6, 1.7);
  d.yaw = 0.41;
  d.velocity = Vec2(0, 0);
  d.class_label = "car";
  d.score = 0.625;
  const auto back = detections_from_json(detections_to_json({d}));
  REQUIRE(back.size() == 1);
  CHECK(back[0].center == d.center);
  CHECK(back[0].size == d.size);
  CHECK(back[0].yaw == d.yaw);
  CHECK(back[0].class_label == d.class_label);
  CHECK(back[0].score == d.score);
}

TEST_CASE("end-to-end: one rendered box, clean sensors, oracle depth") {
  scene::SceneGenConfig gen;
  scene::Scene sc = scene::generate_scene(
      [] {
        scene::SceneGenConfig c;
        c.count_min = c.count_max = 0;
        return c;
      }(),
      3);
  scene::ObjectBox box;
  box.id = 0;
  box.class_label = "car";
  box.center = Vec3(12.0, 3.0, 0.75);
  box.size = Vec3(2.0, 4.0, 1.5);
  box.yaw = 0.5;
  sc.objects.push_back(box);

  sensors::RenderConfig rc;
  const auto cloud = sensors::render_lidar(sc, 17, rc);
  const auto images = sensors::render_cameras(sc, rc);
  bevpipe::PipelineConfig pc;
  const auto bev = bevpipe::run_pipeline(images, sc.cameras, cloud, pc, bevpipe::SensorMode::CL);
  DetectorParams params;
  params.class_priors = default_class_priors();
  const auto dets = extract_detections(bev, center_heatmap(bev), params);

  REQUIRE(dets.size() == 1);
  CHECK(dets[0].class_label == "car");
  CHECK((dets[0].center - Vec2(12.0, 3.0)).norm() < 0.5);
}

TEST_CASE("true positives decrease with dropout (>= 50 scenes)") {
  scene::SceneGenConfig gen;
  gen.count_min = 3;
  gen.count_max = 8;
  gen.extent = 30.0;
  bevpipe::PipelineConfig pc;
  DetectorParams params;
  params.class_priors = default_class_priors();

  double tp_at[3] = {0, 0, 0};
  const double ratios[3] = {0.0, 0.5, 0.9};
  for (int s = 0; s < 50; ++s) {
    const scene::Scene sc = scene::generate_scene(gen, 7000 + s);
    const auto cloud = sensors::render_lidar(sc, 100 + s, {});
    for (int k = 0; k < 3; ++k) {
      degrade::LidarDegradeSpec spec;
      spec.ratio = ratios[k];
      spec.seed = 555 + s;
      const auto kept = degrade::lidar_dropout(cloud, spec);
      const auto bev = bevpipe::run_pipeline({}, sc.cameras, kept, pc, bevpipe::SensorMode::L);
      const auto dets = extract_detections(bev, center_heatmap(bev), params);
      // Class-agnostic proximity TPs: detection within 2 m of an unused GT.
      std::vector<bool> used(sc.objects.size(), false);
      for (const Detection& d : dets) {
        for (size_t g = 0; g < sc.objects.size(); ++g) {
          if (used[g]) continue;
          if ((d.center - sc.objects[g].center.head<2>()).norm() <= 2.0) {
            used[g] = true;
            tp_at[k] += 1;
            break;
          }
        }
      }
    }
  }
  CHECK(tp_at[0] >= tp_at[1]);
  CHECK(tp_at[1] >= tp_at[2]);
  CHECK(tp_at[0] > tp_at[2]);  // the drop is real, not flat
}
