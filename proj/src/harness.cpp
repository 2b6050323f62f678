#include "bevbench/harness.hpp"

#include <omp.h>

#include <json.hpp>

#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>

#include "bevbench/rng.hpp"

namespace bevbench::harness {

using bevpipe::SensorMode;
using nlohmann::json;

namespace {

constexpr uint64_t kRenderSalt = 0x52454E4452ull;
constexpr uint64_t kLidarSalt = 0x4C49444152ull;
constexpr uint64_t kCameraSalt = 0x43414D4552ull;

}  // namespace

std::string occlusion_target_name(OcclusionTarget t) {
  switch (t) {
    case OcclusionTarget::none: return "none";
    case OcclusionTarget::camera: return "camera";
    case OcclusionTarget::lidar: return "lidar";
  }
  return "?";
}

OcclusionTarget occlusion_target_from_name(const std::string& name) {
  if (name == "none") return OcclusionTarget::none;
  if (name == "camera") return OcclusionTarget::camera;
  if (name == "lidar") return OcclusionTarget::lidar;
  throw ConfigError("unknown occlusion target: " + name);
}

double ExperimentConfig::effective_camera_sigma() const {
  if (camera_sigma > 0.0) return camera_sigma;
  return 9.0 * gen.image_width / 1600.0;
}

std::vector<SweepRowSpec> ExperimentConfig::effective_rows() const {
  if (!rows.empty()) return rows;
  return {{SensorMode::C, OcclusionTarget::none},
          {SensorMode::C, OcclusionTarget::camera},
          {SensorMode::L, OcclusionTarget::none},
          {SensorMode::L, OcclusionTarget::lidar},
          {SensorMode::CL, OcclusionTarget::none},
          {SensorMode::CL, OcclusionTarget::camera},
          {SensorMode::CL, OcclusionTarget::lidar}};
}

void ExperimentConfig::validate() const {
  if (n_scenes < 1) throw ConfigError("ExperimentConfig: n_scenes must be >= 1");
  gen.validate();
  pipeline.validate();
  detector.validate();
  if (camera_sigma < 0.0) throw ConfigError("ExperimentConfig: camera_sigma must be >= 0");
  double prev = -1.0;
  for (double r : lidar_levels) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("ExperimentConfig: lidar level outside [0,1]");
    if (r < prev) throw ConfigError("ExperimentConfig: lidar levels must be ascending");
    prev = r;
  }
  for (double c : camera_coverages)
    if (!(c >= 0.0 && c <= 1.0))
      throw ConfigError("ExperimentConfig: camera coverage outside [0,1]");
}

ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;
  // Wire the shared class list into the detector and the evaluator.
  cfg.detector.class_priors.clear();
  for (const scene::ClassSpec& c : cfg.gen.classes)
    cfg.detector.class_priors.push_back({c.name, c.size_prior.z()});
  cfg.eval.classes = scene::class_names(cfg.gen.classes);
  cfg.eval.symmetric_classes.clear();
  for (const scene::ClassSpec& c : cfg.gen.classes)
    if (c.yaw_symmetric) cfg.eval.symmetric_classes.insert(c.name);
  cfg.render.classes = scene::class_names(cfg.gen.classes);
  return cfg;
}

uint64_t scene_seed(uint64_t master_seed, int scene_index) {
  return derive_seed(master_seed, static_cast<uint64_t>(scene_index));
}

// ---------------------------------------------------------------------------
// Sweep

std::vector<ReportRow> run_sweep(const ExperimentConfig& cfg, int threads) {
  cfg.validate();

  struct Cell {
    SweepRowSpec row;
    double severity;
  };
  std::vector<Cell> cells;
  for (const SweepRowSpec& row : cfg.effective_rows()) {
    switch (row.target) {
      case OcclusionTarget::none:
        cells.push_back({row, 0.0});
        break;
      case OcclusionTarget::lidar:
        for (double r : cfg.lidar_levels) cells.push_back({row, r});
        break;
      case OcclusionTarget::camera:
        for (double c : cfg.camera_coverages) cells.push_back({row, c});
        break;
    }
  }
  const int n_cells = static_cast<int>(cells.size());
  const double sigma = cfg.effective_camera_sigma();

  sensors::RenderConfig render_cfg = cfg.render;
  render_cfg.classes = scene::class_names(cfg.gen.classes);

  std::vector<std::vector<std::vector<detect::Detection>>> dets(
      n_cells, std::vector<std::vector<detect::Detection>>(cfg.n_scenes));
  std::vector<std::vector<scene::ObjectBox>> gts(cfg.n_scenes);
  std::vector<double> cell_seconds(n_cells, 0.0);

  bool failed = false;
  std::string failure;
  std::mutex failure_mu;

  const int prev_threads = omp_get_max_threads();
  if (threads > 0) omp_set_num_threads(threads);

  // Which branch variants any cell needs. Branch BEVs are pure functions of
  // (scene, severity), so they are computed once per scene and shared across
  // cells; this changes nothing observable, the fused grids are bit-identical.
  bool need_clean_lidar = false, need_clean_camera = false;
  std::set<double> lidar_severities, camera_severities;
  for (const Cell& cell : cells) {
    const bool has_l =
        cell.row.mode == SensorMode::L || cell.row.mode == SensorMode::CL;
    const bool has_c =
        cell.row.mode == SensorMode::C || cell.row.mode == SensorMode::CL;
    if (has_l) {
      if (cell.row.target == OcclusionTarget::lidar)
        lidar_severities.insert(cell.severity);
      else
        need_clean_lidar = true;
    }
    if (has_c) {
      if (cell.row.target == OcclusionTarget::camera)
        camera_severities.insert(cell.severity);
      else
        need_clean_camera = true;
    }
  }

#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < cfg.n_scenes; ++i) {
    {
      std::lock_guard<std::mutex> lock(failure_mu);
      if (failed) continue;
    }
    const uint64_t sseed = scene_seed(cfg.master_seed, i);
    try {
      const scene::Scene sc = scene::generate_scene(cfg.gen, sseed);
      const sensors::PointCloud cloud =
          sensors::render_lidar(sc, derive_seed(sseed, kRenderSalt), render_cfg);
      const std::vector<sensors::FeatureImage> images = sensors::render_cameras(sc, render_cfg);
      gts[i] = sc.objects;

      std::map<double, bevpipe::BEVGrid> lidar_by_sev;
      std::map<double, bevpipe::BEVGrid> camera_by_sev;
      bevpipe::BEVGrid lidar_clean, camera_clean;
      if (need_clean_lidar)
        lidar_clean = bevpipe::lidar_bev(cloud, cfg.pipeline, Exec::serial);
      for (double r : lidar_severities) {
        degrade::LidarDegradeSpec spec;
        spec.ratio = r;
        spec.seed = derive_seed(sseed, kLidarSalt ^ std::bit_cast<uint64_t>(r));
        lidar_by_sev[r] =
            bevpipe::lidar_bev(degrade::lidar_dropout(cloud, spec), cfg.pipeline, Exec::serial);
      }
      if (need_clean_camera)
        camera_clean = bevpipe::camera_bev(images, sc.cameras, cfg.pipeline, Exec::serial);
      for (double cov : camera_severities) {
        std::vector<sensors::FeatureImage> degraded;
        degraded.reserve(images.size());
        for (size_t k = 0; k < images.size(); ++k) {
          const uint64_t mask_seed = derive_seed(derive_seed(sseed, kCameraSalt + k),
                                                 std::bit_cast<uint64_t>(cov));
          const degrade::SoilMask mask = degrade::generate_soiling_mask(
              images[k].height, images[k].width, cov, cfg.mask_blob_count, mask_seed);
          degraded.push_back(
              degrade::apply_camera_occlusion(images[k], mask, sigma, Exec::serial));
        }
        camera_by_sev[cov] =
            bevpipe::camera_bev(degraded, sc.cameras, cfg.pipeline, Exec::serial);
      }
      const bevpipe::BEVGrid none = bevpipe::empty_bev(cfg.pipeline.grid);

      for (int c = 0; c < n_cells; ++c) {
        const auto t0 = std::chrono::steady_clock::now();
        const Cell& cell = cells[c];
        const bool has_l =
            cell.row.mode == SensorMode::L || cell.row.mode == SensorMode::CL;
        const bool has_c =
            cell.row.mode == SensorMode::C || cell.row.mode == SensorMode::CL;
        const bevpipe::BEVGrid& lid =
            !has_l ? none
                   : (cell.row.target == OcclusionTarget::lidar ? lidar_by_sev[cell.severity]
                                                                : lidar_clean);
        const bevpipe::BEVGrid& cam =
            !has_c ? none
                   : (cell.row.target == OcclusionTarget::camera ? camera_by_sev[cell.severity]
                                                                 : camera_clean);
        const bevpipe::BEVGrid bev =
            bevpipe::fuse_bev(cam, lid, cfg.pipeline.encoder_radius, Exec::serial);
        const std::vector<double> heat = detect::center_heatmap(bev, Exec::serial);
        dets[c][i] = detect::extract_detections(bev, heat, cfg.detector);

        const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                              .count();
#pragma omp atomic
        cell_seconds[c] += dt;
      }
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(failure_mu);
      if (!failed) {
        failed = true;
        failure = "scene " + std::to_string(i) + " (seed " + std::to_string(sseed) +
                  ") failed: " + e.what();
      }
    }
  }
  if (threads > 0) omp_set_num_threads(prev_threads);
  if (failed) throw std::runtime_error(failure);

  std::vector<ReportRow> out;
  for (int c = 0; c < n_cells; ++c) {
    const auto t0 = std::chrono::steady_clock::now();
    ReportRow row;
    row.mode = bevpipe::sensor_mode_name(cells[c].row.mode);
    row.occluded_sensor = occlusion_target_name(cells[c].row.target);
    row.severity = cells[c].severity;
    row.eval = metrics::evaluate_dataset(dets[c], gts, cfg.eval);
    row.map = row.eval.map;
    row.nds = row.eval.nds;
    for (const std::string& cls : cfg.eval.classes)
      row.class_ap.emplace_back(cls, row.eval.class_ap(cls));
    row.scene_count = cfg.n_scenes;
    row.wall_time_s =
        cell_seconds[c] +
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(row));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Config JSON

namespace {

json grid_to_json(const bevpipe::GridSpec& g) {
  return json{{"x", {g.x_min, g.x_max}},
              {"y", {g.y_min, g.y_max}},
              {"z", {g.z_min, g.z_max}},
              {"resolution", {g.rx, g.ry, g.rz}}};
}

bevpipe::GridSpec grid_from_json(const json& j, const bevpipe::GridSpec& dflt) {
  bevpipe::GridSpec g = dflt;
  if (j.contains("x")) {
    g.x_min = j["x"].at(0);
    g.x_max = j["x"].at(1);
  }
  if (j.contains("y")) {
    g.y_min = j["y"].at(0);
    g.y_max = j["y"].at(1);
  }
  if (j.contains("z")) {
    g.z_min = j["z"].at(0);
    g.z_max = j["z"].at(1);
  }
  if (j.contains("resolution")) {
    g.rx = j["resolution"].at(0);
    g.ry = j["resolution"].at(1);
    g.rz = j["resolution"].at(2);
  }
  return g;
}

}  // namespace

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["format"] = "bevbench-experiment/1";
  j["n_scenes"] = cfg.n_scenes;
  j["master_seed"] = cfg.master_seed;

  json classes = json::array();
  for (const scene::ClassSpec& c : cfg.gen.classes)
    classes.push_back(json{{"name", c.name},
                           {"size", {c.size_prior.x(), c.size_prior.y(), c.size_prior.z()}},
                           {"weight", c.weight},
                           {"yaw_symmetric", c.yaw_symmetric}});
  j["scene_gen"] = json{{"count_min", cfg.gen.count_min},
                        {"count_max", cfg.gen.count_max},
                        {"extent", cfg.gen.extent},
                        {"min_radius", cfg.gen.min_radius},
                        {"speed_min", cfg.gen.speed_min},
                        {"speed_max", cfg.gen.speed_max},
                        {"size_jitter", cfg.gen.size_jitter},
                        {"classes", std::move(classes)},
                        {"n_cameras", cfg.gen.n_cameras},
                        {"image_width", cfg.gen.image_width},
                        {"image_height", cfg.gen.image_height},
                        {"hfov_deg", cfg.gen.hfov_deg},
                        {"camera_height", cfg.gen.camera_height},
                        {"lidar_height", cfg.gen.lidar_height},
                        {"lidar_max_range", cfg.gen.lidar_max_range},
                        {"lidar_density", cfg.gen.lidar_density}};
  j["render"] = json{{"ground",
                      json{{"enabled", cfg.render.ground.enabled},
                           {"r_min", cfg.render.ground.r_min},
                           {"r_max", cfg.render.ground.r_max},
                           {"density_scale", cfg.render.ground.density_scale}}},
                     {"camera_oversample", cfg.render.camera_oversample},
                     {"z_near", cfg.render.z_near}};
  j["pipeline"] = json{{"grid", grid_to_json(cfg.pipeline.grid)},
                       {"depth_bins",
                        json{{"z_near", cfg.pipeline.bins.z_near},
                             {"z_far", cfg.pipeline.bins.z_far},
                             {"count", cfg.pipeline.bins.count}}},
                       {"depth_mode",
                        cfg.pipeline.depth_mode == bevpipe::DepthMode::oracle ? "oracle"
                                                                              : "uniform"},
                       {"tau", cfg.pipeline.tau},
                       {"encoder_radius", cfg.pipeline.encoder_radius}};
  j["detector"] = json{{"peak_threshold", cfg.detector.peak_threshold},
                       {"nms_radius", cfg.detector.nms_radius},
                       {"cluster_radius", cfg.detector.cluster_radius},
                       {"min_cluster_cells", cfg.detector.min_cluster_cells},
                       {"score_scale", cfg.detector.score_scale}};
  j["eval"] = json{{"thresholds", cfg.eval.thresholds},
                   {"tp_threshold", cfg.eval.tp_threshold}};
  j["camera_sigma"] = cfg.camera_sigma;
  j["mask_blob_count"] = cfg.mask_blob_count;
  j["camera_coverages"] = cfg.camera_coverages;
  j["lidar_levels"] = cfg.lidar_levels;
  json rows = json::array();
  for (const SweepRowSpec& r : cfg.effective_rows())
    rows.push_back(json{{"mode", bevpipe::sensor_mode_name(r.mode)},
                        {"occlude", occlusion_target_name(r.target)}});
  j["rows"] = std::move(rows);
  return j.dump(2);
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  ExperimentConfig cfg = default_experiment_config();
  try {
    cfg.n_scenes = j.value("n_scenes", cfg.n_scenes);
    cfg.master_seed = j.value("master_seed", cfg.master_seed);

    if (j.contains("scene_gen")) {
      const json& g = j["scene_gen"];
      cfg.gen.count_min = g.value("count_min", cfg.gen.count_min);
      cfg.gen.count_max = g.value("count_max", cfg.gen.count_max);
      cfg.gen.extent = g.value("extent", cfg.gen.extent);
      cfg.gen.min_radius = g.value("min_radius", cfg.gen.min_radius);
      cfg.gen.speed_min = g.value("speed_min", cfg.gen.speed_min);
      cfg.gen.speed_max = g.value("speed_max", cfg.gen.speed_max);
      cfg.gen.size_jitter = g.value("size_jitter", cfg.gen.size_jitter);
      cfg.gen.n_cameras = g.value("n_cameras", cfg.gen.n_cameras);
      cfg.gen.image_width = g.value("image_width", cfg.gen.image_width);
      cfg.gen.image_height = g.value("image_height", cfg.gen.image_height);
      cfg.gen.hfov_deg = g.value("hfov_deg", cfg.gen.hfov_deg);
      cfg.gen.camera_height = g.value("camera_height", cfg.gen.camera_height);
      cfg.gen.lidar_height = g.value("lidar_height", cfg.gen.lidar_height);
      cfg.gen.lidar_max_range = g.value("lidar_max_range", cfg.gen.lidar_max_range);
      cfg.gen.lidar_density = g.value("lidar_density", cfg.gen.lidar_density);
      if (g.contains("classes")) {
        cfg.gen.classes.clear();
        for (const json& jc : g["classes"]) {
          scene::ClassSpec c;
          c.name = jc.at("name");
          c.size_prior = Vec3(jc.at("size").at(0), jc.at("size").at(1), jc.at("size").at(2));
          c.weight = jc.value("weight", 1.0);
          c.yaw_symmetric = jc.value("yaw_symmetric", false);
          cfg.gen.classes.push_back(std::move(c));
        }
      }
    }
    if (j.contains("render")) {
      const json& r = j["render"];
      if (r.contains("ground")) {
        const json& g = r["ground"];
        cfg.render.ground.enabled = g.value("enabled", cfg.render.ground.enabled);
        cfg.render.ground.r_min = g.value("r_min", cfg.render.ground.r_min);
        cfg.render.ground.r_max = g.value("r_max", cfg.render.ground.r_max);
        cfg.render.ground.density_scale =
            g.value("density_scale", cfg.render.ground.density_scale);
      }
      cfg.render.camera_oversample = r.value("camera_oversample", cfg.render.camera_oversample);
      cfg.render.z_near = r.value("z_near", cfg.render.z_near);
    }
    if (j.contains("pipeline")) {
      const json& p = j["pipeline"];
      if (p.contains("grid")) cfg.pipeline.grid = grid_from_json(p["grid"], cfg.pipeline.grid);
      if (p.contains("depth_bins")) {
        const json& b = p["depth_bins"];
        cfg.pipeline.bins.z_near = b.value("z_near", cfg.pipeline.bins.z_near);
        cfg.pipeline.bins.z_far = b.value("z_far", cfg.pipeline.bins.z_far);
        cfg.pipeline.bins.count = b.value("count", cfg.pipeline.bins.count);
      }
      if (p.contains("depth_mode")) {
        const std::string mode = p["depth_mode"];
        if (mode == "oracle")
          cfg.pipeline.depth_mode = bevpipe::DepthMode::oracle;
        else if (mode == "uniform")
          cfg.pipeline.depth_mode = bevpipe::DepthMode::uniform;
        else
          throw ConfigError("unknown depth_mode: " + mode);
      }
      cfg.pipeline.tau = p.value("tau", cfg.pipeline.tau);
      cfg.pipeline.encoder_radius = p.value("encoder_radius", cfg.pipeline.encoder_radius);
    }
    if (j.contains("detector")) {
      const json& d = j["detector"];
      cfg.detector.peak_threshold = d.value("peak_threshold", cfg.detector.peak_threshold);
      cfg.detector.nms_radius = d.value("nms_radius", cfg.detector.nms_radius);
      cfg.detector.cluster_radius = d.value("cluster_radius", cfg.detector.cluster_radius);
      cfg.detector.min_cluster_cells =
          d.value("min_cluster_cells", cfg.detector.min_cluster_cells);
      cfg.detector.score_scale = d.value("score_scale", cfg.detector.score_scale);
    }
    if (j.contains("eval")) {
      const json& e = j["eval"];
      cfg.eval.thresholds = e.value("thresholds", cfg.eval.thresholds);
      cfg.eval.tp_threshold = e.value("tp_threshold", cfg.eval.tp_threshold);
    }
    cfg.camera_sigma = j.value("camera_sigma", cfg.camera_sigma);
    cfg.mask_blob_count = j.value("mask_blob_count", cfg.mask_blob_count);
    cfg.camera_coverages = j.value("camera_coverages", cfg.camera_coverages);
    cfg.lidar_levels = j.value("lidar_levels", cfg.lidar_levels);
    if (j.contains("rows")) {
      cfg.rows.clear();
      for (const json& jr : j["rows"]) {
        SweepRowSpec r;
        r.mode = bevpipe::sensor_mode_from_name(jr.at("mode"));
        r.target = occlusion_target_from_name(jr.at("occlude"));
        cfg.rows.push_back(r);
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field error: ") + e.what());
  }

  // Re-derive the class wiring after any class-list override.
  cfg.detector.class_priors.clear();
  for (const scene::ClassSpec& c : cfg.gen.classes)
    cfg.detector.class_priors.push_back({c.name, c.size_prior.z()});
  cfg.eval.classes = scene::class_names(cfg.gen.classes);
  cfg.eval.symmetric_classes.clear();
  for (const scene::ClassSpec& c : cfg.gen.classes)
    if (c.yaw_symmetric) cfg.eval.symmetric_classes.insert(c.name);
  cfg.render.classes = scene::class_names(cfg.gen.classes);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return experiment_config_from_json(buf.str());
}

std::string fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for hashing: " + path);
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
    if (!in) break;
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return std::string(hex);
}

}  // namespace bevbench::harness
