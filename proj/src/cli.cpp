#include <CLI11.hpp>

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "bevbench/harness.hpp"
#include "bevbench/rng.hpp"

namespace bevbench::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr uint64_t kRenderSalt = 0x52454E4452ull;

ExperimentConfig config_or_default(const std::string& config_path) {
  if (config_path.empty()) return default_experiment_config();
  return load_experiment_config(config_path);
}

std::vector<std::string> sorted_files(const std::string& dir, const std::string& ext) {
  std::vector<std::string> out;
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ext)
      out.push_back(entry.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

int cmd_gen(const ExperimentConfig& cfg, uint64_t seed, int count, const std::string& out_dir) {
  fs::create_directories(out_dir);
  for (int i = 0; i < count; ++i) {
    const scene::Scene sc = scene::generate_scene(cfg.gen, scene_seed(seed, i));
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%05d.json", i);
    scene::save_scene((fs::path(out_dir) / name).string(), sc);
  }
  std::cout << "wrote " << count << " scene(s) to " << out_dir << "\n";
  return 0;
}

int cmd_render(const ExperimentConfig& cfg, uint64_t seed, const std::string& scene_path,
               const std::string& out_dir) {
  const scene::Scene sc = scene::load_scene(scene_path);
  sensors::RenderConfig rc = cfg.render;
  rc.classes = scene::class_names(cfg.gen.classes);
  fs::create_directories(out_dir);
  const sensors::PointCloud cloud =
      sensors::render_lidar(sc, derive_seed(sc.seed ? sc.seed : seed, kRenderSalt), rc);
  sensors::save_point_cloud((fs::path(out_dir) / "cloud.bvpc").string(), cloud);
  const auto images = sensors::render_cameras(sc, rc);
  for (const auto& img : images)
    sensors::save_feature_image((fs::path(out_dir) / (img.camera_id + ".bvfi")).string(), img);
  std::cout << "rendered " << cloud.points.size() << " points and " << images.size()
            << " camera image(s) to " << out_dir << "\n";
  return 0;
}

int cmd_degrade(uint64_t seed, const std::string& in_dir, const std::string& out_dir,
                double camera_sigma, double camera_coverage, int blob_count,
                double lidar_drop, const std::string& mask_path) {
  fs::create_directories(out_dir);
  const std::string cloud_path = (fs::path(in_dir) / "cloud.bvpc").string();
  if (fs::exists(cloud_path)) {
    degrade::LidarDegradeSpec spec;
    spec.ratio = lidar_drop;
    spec.seed = derive_seed(seed, 0x4C49444152ull);
    const auto cloud = degrade::lidar_dropout(sensors::load_point_cloud(cloud_path), spec);
    sensors::save_point_cloud((fs::path(out_dir) / "cloud.bvpc").string(), cloud);
    std::cout << "lidar: kept " << cloud.points.size() << " points (r=" << lidar_drop << ")\n";
  }
  size_t cam_index = 0;
  for (const std::string& path : sorted_files(in_dir, ".bvfi")) {
    sensors::FeatureImage img = sensors::load_feature_image(path);
    if (camera_coverage > 0.0 || !mask_path.empty()) {
      degrade::CameraDegradeSpec spec;
      spec.sigma = camera_sigma;
      spec.coverage = camera_coverage;
      spec.blob_count = blob_count;
      spec.seed = derive_seed(derive_seed(seed, 0x43414D4552ull + cam_index),
                              std::bit_cast<uint64_t>(camera_coverage));
      spec.mask_path = mask_path;
      const degrade::SoilMask mask = degrade::mask_for_image(img, spec);
      degrade::save_mask_pgm(
          (fs::path(out_dir) / ("mask_" + img.camera_id + ".pgm")).string(), mask);
      img = degrade::apply_camera_occlusion(img, mask, camera_sigma);
    }
    sensors::save_feature_image((fs::path(out_dir) / fs::path(path).filename()).string(), img);
    ++cam_index;
  }
  std::cout << "degraded sensors written to " << out_dir << "\n";
  return 0;
}

int cmd_detect(const ExperimentConfig& cfg, const std::string& scene_path,
               const std::string& sensors_dir, const std::string& mode_name,
               const std::string& out_dir) {
  const scene::Scene sc = scene::load_scene(scene_path);
  const bevpipe::SensorMode mode = bevpipe::sensor_mode_from_name(mode_name);
  sensors::PointCloud cloud;
  const std::string cloud_path = (fs::path(sensors_dir) / "cloud.bvpc").string();
  if (fs::exists(cloud_path)) cloud = sensors::load_point_cloud(cloud_path);
  std::vector<sensors::FeatureImage> images;
  for (const std::string& path : sorted_files(sensors_dir, ".bvfi"))
    images.push_back(sensors::load_feature_image(path));

  const bevpipe::BEVGrid bev =
      bevpipe::run_pipeline(images, sc.cameras, cloud, cfg.pipeline, mode);
  const std::vector<double> heat = detect::center_heatmap(bev);
  const auto dets = detect::extract_detections(bev, heat, cfg.detector);
  fs::create_directories(out_dir);
  const std::string out_path = (fs::path(out_dir) / "detections.json").string();
  detect::save_detections(out_path, dets);
  std::cout << dets.size() << " detection(s) -> " << out_path << "\n";
  return 0;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& dets_path,
             const std::string& scene_path, bool dump_pr, const std::string& out_dir) {
  const auto dets = detect::load_detections(dets_path);
  const scene::Scene sc = scene::load_scene(scene_path);
  metrics::EvalConfig ec = cfg.eval;
  ec.dump_pr = dump_pr;
  const metrics::EvalResult res = metrics::evaluate(dets, sc.objects, ec);
  fs::create_directories(out_dir);
  const std::string out_path = (fs::path(out_dir) / "eval.json").string();
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot open for writing: " + out_path);
  out << metrics::eval_result_to_json(res) << "\n";
  std::printf("mAP=%.4f NDS=%.4f\n", res.map, res.nds);
  if (res.no_gt) std::cout << "note: scene has no ground-truth objects\n";
  return 0;
}

int cmd_sweep(const ExperimentConfig& cfg, const std::string& config_path, int threads,
              const std::string& formats_arg, const std::string& out_dir) {
  std::set<std::string> formats;
  {
    std::stringstream ss(formats_arg);
    std::string tok;
    while (std::getline(ss, tok, ',')) formats.insert(tok);
  }
  const auto rows = run_sweep(cfg, threads);
  auto written = emit_report(rows, formats, out_dir);

  for (const ReportRow& r : rows)
    std::printf("%-4s occluded=%-6s severity=%-5g mAP=%.4f NDS=%.4f (%.1fs)\n",
                r.mode.c_str(), r.occluded_sensor.c_str(), r.severity, r.map, r.nds,
                r.wall_time_s);

  // Provenance manifest: inputs, seeds, output content hashes.
  json manifest;
  manifest["format"] = "bevbench-manifest/1";
  manifest["master_seed"] = cfg.master_seed;
  manifest["n_scenes"] = cfg.n_scenes;
  if (!config_path.empty()) {
    manifest["config_path"] = config_path;
    manifest["config_fnv1a64"] = fnv1a64_file(config_path);
  }
  std::vector<uint64_t> seeds;
  for (int i = 0; i < cfg.n_scenes; ++i) seeds.push_back(scene_seed(cfg.master_seed, i));
  manifest["scene_seeds"] = std::move(seeds);
  json outputs = json::array();
  for (const std::string& path : written)
    outputs.push_back(json{{"path", path}, {"fnv1a64", fnv1a64_file(path)}});
  manifest["outputs"] = std::move(outputs);
  const std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
  std::ofstream mout(manifest_path);
  if (!mout) throw std::runtime_error("cannot open for writing: " + manifest_path);
  mout << manifest.dump(2) << "\n";
  std::cout << "reports written to " << out_dir << "\n";
  return 0;
}

}  // namespace

int cli(const std::vector<std::string>& args) {
  CLI::App app{"bevbench: deterministic camera+LiDAR BEV occlusion-robustness benchmark"};
  app.require_subcommand(1);

  uint64_t seed = 42;
  std::string out_dir = ".";
  std::string config_path;
  app.add_option("--seed", seed, "master seed")->capture_default_str();
  app.add_option("--out", out_dir, "output directory")->capture_default_str();
  app.add_option("--config", config_path, "experiment config JSON");

  auto* gen = app.add_subcommand("gen", "generate synthetic scenes as JSON");
  int gen_count = 1;
  gen->add_option("--count", gen_count, "number of scenes")->capture_default_str();

  auto* render = app.add_subcommand("render", "render a scene to sensor files");
  std::string scene_path;
  render->add_option("--scene", scene_path, "scene JSON path")->required();

  auto* degrade_cmd = app.add_subcommand("degrade", "apply occlusion to sensor files");
  std::string in_dir;
  double camera_sigma = 0.9, camera_coverage = 0.0, lidar_drop = 0.0;
  int blob_count = 3;
  std::string mask_path;
  degrade_cmd->add_option("--in", in_dir, "input sensor directory")->required();
  degrade_cmd->add_option("--camera-sigma", camera_sigma, "blur std dev, pixels")
      ->capture_default_str();
  degrade_cmd->add_option("--camera-coverage", camera_coverage, "mask coverage in [0,1]")
      ->capture_default_str();
  degrade_cmd->add_option("--camera-blobs", blob_count, "procedural mask blob count")
      ->capture_default_str();
  degrade_cmd->add_option("--mask", mask_path, "mask file (PNG/PGM) instead of procedural");
  degrade_cmd->add_option("--lidar-drop", lidar_drop, "dropout ratio r in [0,1]")
      ->capture_default_str();

  auto* detect_cmd = app.add_subcommand("detect", "run the BEV pipeline and detector");
  std::string det_scene, sensors_dir, mode_name = "C+L";
  detect_cmd->add_option("--scene", det_scene, "scene JSON path (sensor rig)")->required();
  detect_cmd->add_option("--sensors", sensors_dir, "sensor file directory")->required();
  detect_cmd->add_option("--mode", mode_name, "sensor mode: C, L or C+L")
      ->capture_default_str();

  auto* eval_cmd = app.add_subcommand("eval", "score detections against a scene");
  std::string dets_path, eval_scene;
  bool dump_pr = false;
  eval_cmd->add_option("--dets", dets_path, "detections JSON path")->required();
  eval_cmd->add_option("--scene", eval_scene, "scene JSON path")->required();
  eval_cmd->add_flag("--dump-pr", dump_pr, "include PR curves in eval.json");

  auto* sweep_cmd = app.add_subcommand("sweep", "run the occlusion sweep and emit reports");
  int threads = 0;
  std::string formats = "csv,markdown,json,svg";
  sweep_cmd->add_option("--threads", threads, "worker threads (0 = default)")
      ->capture_default_str();
  sweep_cmd->add_option("--formats", formats, "comma-separated: csv,markdown,json,svg")
      ->capture_default_str();

  std::vector<const char*> argv;
  argv.push_back("bevbench");
  for (const std::string& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << std::flush;
    return 1;
  }

  try {
    const ExperimentConfig cfg = config_or_default(config_path);
    if (gen->parsed()) return cmd_gen(cfg, seed, gen_count, out_dir);
    if (render->parsed()) return cmd_render(cfg, seed, scene_path, out_dir);
    if (degrade_cmd->parsed())
      return cmd_degrade(seed, in_dir, out_dir, camera_sigma, camera_coverage, blob_count,
                         lidar_drop, mask_path);
    if (detect_cmd->parsed()) return cmd_detect(cfg, det_scene, sensors_dir, mode_name, out_dir);
    if (eval_cmd->parsed()) return cmd_eval(cfg, dets_path, eval_scene, dump_pr, out_dir);
    if (sweep_cmd->parsed()) return cmd_sweep(cfg, config_path, threads, formats, out_dir);
    std::cerr << "no subcommand\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

int cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return cli(args);
}

}  // namespace bevbench::harness
