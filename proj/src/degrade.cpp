#include "bevbench/degrade.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "bevbench/rng.hpp"

namespace bevbench::degrade {

using sensors::FeatureImage;
using sensors::PointCloud;

double SoilMask::coverage() const {
  if (grid.empty()) return 0.0;
  size_t ones = 0;
  for (uint8_t v : grid) ones += v;
  return static_cast<double>(ones) / static_cast<double>(grid.size());
}

void SoilMask::validate() const {
  if (grid.size() != static_cast<size_t>(height) * width)
    throw std::invalid_argument("SoilMask: size mismatch");
  for (uint8_t v : grid)
    if (v > 1) throw std::invalid_argument("SoilMask: values must be 0 or 1");
}

void CameraDegradeSpec::validate() const {
  if (!(sigma > 0.0)) throw std::invalid_argument("CameraDegradeSpec: sigma must be > 0");
  if (!(coverage >= 0.0 && coverage <= 1.0))
    throw std::invalid_argument("CameraDegradeSpec: coverage outside [0, 1]");
  if (coverage > 0.0 && mask_path.empty() && blob_count < 1)
    throw std::invalid_argument("CameraDegradeSpec: blob_count must be >= 1");
}

void LidarDegradeSpec::validate() const {
  if (!(ratio >= 0.0 && ratio <= 1.0))
    throw std::invalid_argument("LidarDegradeSpec: ratio outside [0, 1]");
}

SoilMask generate_soiling_mask(int height, int width, double coverage, int blob_count,
                               uint64_t seed) {
  if (height < 1 || width < 1)
    throw std::invalid_argument("generate_soiling_mask: empty shape");
  if (!(coverage >= 0.0 && coverage <= 1.0))
    throw std::invalid_argument("generate_soiling_mask: coverage outside [0, 1]");
  const size_t n = static_cast<size_t>(height) * width;

  SoilMask mask;
  mask.height = height;
  mask.width = width;
  if (coverage == 0.0) {
    mask.grid.assign(n, 0);
    return mask;
  }
  if (coverage == 1.0) {
    mask.grid.assign(n, 1);
    return mask;
  }
  if (blob_count < 1)
    throw std::invalid_argument("generate_soiling_mask: blob_count must be >= 1");

  // Threshold at the k-th largest field value so the realized coverage is the
  // nearest representable fraction k/(height*width).
  const long long k = std::llround(coverage * static_cast<double>(n));
  const auto within_tol = [&](double realized) {
    return std::abs(realized - coverage) <= 0.1 * coverage;
  };
  if (k < 1 || !within_tol(static_cast<double>(k) / static_cast<double>(n)))
    throw std::runtime_error("generate_soiling_mask: coverage not representable on this shape");

  Rng rng(seed);
  const double r0 = std::sqrt(coverage * static_cast<double>(n) / (M_PI * blob_count));
  std::vector<double> field(n);

  for (int attempt = 0; attempt < 8; ++attempt) {
    const double scale = 1.6 * std::pow(1.3, attempt);
    std::fill(field.begin(), field.end(), 0.0);
    for (int b = 0; b < blob_count; ++b) {
      const double cx = rng.uniform(0.0, width);
      const double cy = rng.uniform(0.0, height);
      const double s = rng.uniform(0.6, 1.4) * r0 * scale;
      const double aspect = rng.uniform(0.5, 1.0);
      const double ax = s / std::sqrt(aspect), ay = s * std::sqrt(aspect);
      const double theta = rng.uniform(0.0, M_PI);
      const double w1 = rng.uniform(0.10, 0.35), p1 = rng.uniform(0.0, 2.0 * M_PI);
      const double w2 = rng.uniform(0.05, 0.20), p2 = rng.uniform(0.0, 2.0 * M_PI);
      const double ct = std::cos(theta), st = std::sin(theta);
      for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
          const double dx = (x + 0.5) - cx, dy = (y + 0.5) - cy;
          const double lx = (ct * dx + st * dy) / ax;
          const double ly = (-st * dx + ct * dy) / ay;
          const double rho = std::hypot(lx, ly);
          if (rho <= 1e-12) {
            field[static_cast<size_t>(y) * width + x] += 1.0;
            continue;
          }
          const double ang = std::atan2(ly, lx);
          const double wobble =
              1.0 + w1 * std::sin(3.0 * ang + p1) + w2 * std::sin(5.0 * ang + p2);
          const double v = 1.0 - rho / std::max(wobble, 0.2);
          if (v > 0.0) field[static_cast<size_t>(y) * width + x] += v;
        }
      }
    }

    std::vector<double> sorted(field);
    std::nth_element(sorted.begin(), sorted.begin() + (k - 1), sorted.end(),
                     std::greater<double>());
    const double t = sorted[k - 1];
    if (!(t > 0.0)) continue;  // blobs too small for the request; grow and retry

    size_t ones = 0;
    mask.grid.assign(n, 0);
    for (size_t i = 0; i < n; ++i) {
      if (field[i] >= t) {
        mask.grid[i] = 1;
        ++ones;
      }
    }
    if (within_tol(static_cast<double>(ones) / static_cast<double>(n))) return mask;
  }
  throw std::runtime_error("generate_soiling_mask: coverage adjustment infeasible");
}

SoilMask mask_for_image(const FeatureImage& img, const CameraDegradeSpec& spec) {
  spec.validate();
  if (!spec.mask_path.empty()) {
    SoilMask m = load_mask(spec.mask_path);
    if (m.height != img.height || m.width != img.width)
      throw std::runtime_error("mask " + spec.mask_path + " does not match image shape");
    return m;
  }
  return generate_soiling_mask(img.height, img.width, spec.coverage, spec.blob_count,
                               spec.seed);
}

FeatureImage apply_camera_occlusion(const FeatureImage& img, const SoilMask& mask,
                                    double sigma, Exec exec) {
  if (mask.height != img.height || mask.width != img.width)
    throw std::invalid_argument("apply_camera_occlusion: mask/image shape mismatch");
  if (!(sigma > 0.0))
    throw std::invalid_argument("apply_camera_occlusion: sigma must be > 0");

  const int h = img.height, w = img.width, c = img.channels;
  std::vector<double> masked(img.grid.size());
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const double m = mask.at(v, u);
      const size_t base = (static_cast<size_t>(v) * w + u) * c;
      for (int k = 0; k < c; ++k) masked[base + k] = img.grid[base + k] * m;
    }
  }
  const std::vector<double> blurred = convolve_gaussian(masked, h, w, c, sigma, exec);

  FeatureImage out = img;  // depth oracle carried over unmodified
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const double keep = 1.0 - mask.at(v, u);
      const size_t base = (static_cast<size_t>(v) * w + u) * c;
      for (int k = 0; k < c; ++k)
        out.grid[base + k] = img.grid[base + k] * keep + blurred[base + k];
    }
  }
  return out;
}

size_t dropout_retained_count(size_t n, double ratio) {
  return static_cast<size_t>(std::floor(static_cast<double>(n) * (1.0 - ratio) + 0.5));
}

PointCloud lidar_dropout(const PointCloud& cloud, const LidarDegradeSpec& spec) {
  spec.validate();
  const size_t n = cloud.points.size();
  const size_t keep = dropout_retained_count(n, spec.ratio);
  if (keep >= n) return cloud;

  // Partial Fisher-Yates over the index array, then sort the kept prefix so
  // the retained points stay in source order.
  Rng rng(spec.seed);
  std::vector<uint32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0u);
  for (size_t i = 0; i < keep; ++i) {
    const size_t j = i + static_cast<size_t>(rng.uniform_int(n - i));
    std::swap(idx[i], idx[j]);
  }
  std::sort(idx.begin(), idx.begin() + keep);

  PointCloud out;
  out.points.reserve(keep);
  for (size_t i = 0; i < keep; ++i) out.points.push_back(cloud.points[idx[i]]);
  return out;
}

// ---------------------------------------------------------------------------
// Mask files

namespace {

SoilMask load_mask_pgm(const std::string& path, std::ifstream& in) {
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P2") throw std::runtime_error("not a PGM file: " + path);
  auto next_token = [&in, &path]() {
    std::string tok;
    for (;;) {
      if (!(in >> tok)) throw std::runtime_error("truncated PGM header: " + path);
      if (tok[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return tok;
    }
  };
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (w < 1 || h < 1 || maxval < 1 || maxval > 255)
    throw std::runtime_error("unsupported PGM header in " + path);

  SoilMask mask;
  mask.height = h;
  mask.width = w;
  mask.grid.resize(static_cast<size_t>(h) * w);
  if (magic == "P5") {
    in.get();  // single whitespace after maxval
    std::vector<uint8_t> raw(mask.grid.size());
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) throw std::runtime_error("truncated PGM data: " + path);
    for (size_t i = 0; i < raw.size(); ++i) mask.grid[i] = raw[i] ? 1 : 0;
  } else {
    for (size_t i = 0; i < mask.grid.size(); ++i) {
      int v;
      if (!(in >> v)) throw std::runtime_error("truncated PGM data: " + path);
      mask.grid[i] = v ? 1 : 0;
    }
  }
  return mask;
}

SoilMask load_mask_png(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw std::runtime_error("cannot open mask file: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    std::fclose(fp);
    throw std::runtime_error("libpng init failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw std::runtime_error("failed to decode PNG: " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  // Normalize anything to 8-bit gray.
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  if (png_get_color_type(png, info) & PNG_COLOR_MASK_COLOR)
    png_set_rgb_to_gray(png, PNG_ERROR_ACTION_NONE, -1, -1);
  png_read_update_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  SoilMask mask;
  mask.height = h;
  mask.width = w;
  mask.grid.resize(static_cast<size_t>(h) * w);
  std::vector<uint8_t> row(png_get_rowbytes(png, info));
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x) mask.grid[static_cast<size_t>(y) * w + x] = row[x] ? 1 : 0;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return mask;
}

}  // namespace

SoilMask load_mask(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open mask file: " + path);
  char sig[8] = {};
  in.read(sig, 8);
  in.seekg(0);
  static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  if (std::memcmp(sig, png_sig, 8) == 0) {
    in.close();
    return load_mask_png(path);
  }
  return load_mask_pgm(path, in);
}

void save_mask_pgm(const std::string& path, const SoilMask& mask) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "P5\n" << mask.width << " " << mask.height << "\n255\n";
  for (uint8_t v : mask.grid) out.put(v ? char(255) : char(0));
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace bevbench::degrade
