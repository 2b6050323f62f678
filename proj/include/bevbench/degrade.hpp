#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bevbench/kernels.hpp"
#include "bevbench/sensors.hpp"

namespace bevbench::degrade {

// Binary lens-soiling mask; 1 = occluded.
struct SoilMask {
  int height = 0, width = 0;
  std::vector<uint8_t> grid;  // height*width, values in {0, 1}

  uint8_t at(int v, int u) const { return grid[static_cast<size_t>(v) * width + u]; }
  double coverage() const;  // exact fraction of ones
  void validate() const;
};

struct CameraDegradeSpec {
  double sigma = 0.9;      // Gaussian std dev, pixels
  double coverage = 0.25;  // requested mask coverage for procedural masks
  int blob_count = 3;
  uint64_t seed = 0;
  std::string mask_path;  // when set, load instead of generating

  void validate() const;
};

struct LidarDegradeSpec {
  double ratio = 0.0;  // dropout ratio r in [0, 1]
  uint64_t seed = 0;

  void validate() const;
};

// Union of randomly placed, wobbled ellipses thresholded at the exact coverage
// quantile of the blob field. Realized coverage is within +/-10% relative of
// the request (exact 0/1 at the extremes); throws when that is unattainable.
// Deterministic in (arguments, seed).
SoilMask generate_soiling_mask(int height, int width, double coverage, int blob_count,
                               uint64_t seed);

SoilMask mask_for_image(const sensors::FeatureImage& img, const CameraDegradeSpec& spec);

// Mask file loading: single-channel PNG or PGM (P2/P5); nonzero = occluded.
SoilMask load_mask(const std::string& path);
void save_mask_pgm(const std::string& path, const SoilMask& mask);

// Soiling compositing: out = I .* (1 - M) + G_sigma * (I .* M), per feature
// channel, with the blur kernel truncated at radius ceil(3*sigma) and
// renormalized, zero-padded borders. Pixels farther than the kernel radius
// from every masked pixel are bit-identical to the input. The depth oracle is
// not modified (it feeds the stand-in depth head, not the feature path).
sensors::FeatureImage apply_camera_occlusion(const sensors::FeatureImage& img,
                                             const SoilMask& mask, double sigma,
                                             Exec exec = Exec::parallel);

// retained = floor(N*(1-r) + 0.5), evaluated in double; the half-up rule makes
// the count contract exact and testable.
size_t dropout_retained_count(size_t n, double ratio);

// Keeps a uniformly random subset of exactly dropout_retained_count(N, r)
// points, selected without replacement by the seeded generator; retained
// points are bit-identical and keep their relative order.
sensors::PointCloud lidar_dropout(const sensors::PointCloud& cloud,
                                  const LidarDegradeSpec& spec);

}  // namespace bevbench::degrade
