#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "bevbench/bevpipe.hpp"
#include "bevbench/degrade.hpp"
#include "bevbench/detect.hpp"
#include "bevbench/metrics.hpp"
#include "bevbench/scene.hpp"
#include "bevbench/sensors.hpp"

namespace bevbench::harness {

// Raised for bad configuration or unreadable config files (CLI exit code 1,
// as opposed to runtime failures which exit 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class OcclusionTarget { none, camera, lidar };
std::string occlusion_target_name(OcclusionTarget t);
OcclusionTarget occlusion_target_from_name(const std::string& name);

// One experiment row family: a sensor mode plus which sensor (if any) gets
// degraded. Severities come from lidar_levels / camera_coverages.
struct SweepRowSpec {
  bevpipe::SensorMode mode = bevpipe::SensorMode::CL;
  OcclusionTarget target = OcclusionTarget::none;
};

struct ExperimentConfig {
  int n_scenes = 100;
  uint64_t master_seed = 42;
  scene::SceneGenConfig gen;
  sensors::RenderConfig render;
  bevpipe::PipelineConfig pipeline;
  detect::DetectorParams detector;
  metrics::EvalConfig eval;

  double camera_sigma = 0.0;  // 0 = derive as 9 px at 1600 px width, scaled
  int mask_blob_count = 3;
  std::vector<double> camera_coverages = {0.25};
  std::vector<double> lidar_levels = {0.0, 0.3, 0.6, 0.7, 0.8, 0.9};
  std::vector<SweepRowSpec> rows;  // empty = the default 7-row layout

  double effective_camera_sigma() const;
  std::vector<SweepRowSpec> effective_rows() const;
  void validate() const;
};

// Defaults wired together (class list shared by generator, renderer, detector
// and evaluator).
ExperimentConfig default_experiment_config();

ExperimentConfig experiment_config_from_json(const std::string& text);
std::string experiment_config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_experiment_config(const std::string& path);

struct ReportRow {
  std::string mode;             // "C", "L", "C+L"
  std::string occluded_sensor;  // "none", "camera", "lidar"
  double severity = 0.0;        // dropout ratio r or mask coverage, verbatim
  double map = 0.0;
  double nds = 0.0;
  std::vector<std::pair<std::string, double>> class_ap;  // mean AP per class
  int scene_count = 0;
  double wall_time_s = 0.0;  // informational; never serialized
  metrics::EvalResult eval;
};

// Per-scene seed derivation; index-stable so that growing a sweep never
// reshuffles existing scenes.
uint64_t scene_seed(uint64_t master_seed, int scene_index);

// Runs the full sweep: every (row, severity) cell over n_scenes scenes,
// detections pooled per cell and evaluated once. Bit-identical results for
// any thread count (0 = library default).
std::vector<ReportRow> run_sweep(const ExperimentConfig& cfg, int threads = 0);

// Emits report.{csv,md,json,svg} (subset per `formats`) under out_dir and
// returns the paths written. CSV/JSON depend only on the rows, never on
// timing, so reruns are byte-identical.
std::vector<std::string> emit_report(const std::vector<ReportRow>& rows,
                                     const std::set<std::string>& formats,
                                     const std::string& out_dir);

// FNV-1a 64-bit content hash, hex-encoded (provenance manifests).
std::string fnv1a64_file(const std::string& path);

int cli(int argc, char** argv);
int cli(const std::vector<std::string>& args);

}  // namespace bevbench::harness
