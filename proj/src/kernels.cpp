#include "bevbench/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bevbench {

namespace {

inline int window_len(int i, int n, int radius) {
  return std::min(i + radius, n - 1) - std::max(i - radius, 0) + 1;
}

inline void smooth_cell(const double* in, double* out, int nx, int ny, int c,
                        int radius, const std::vector<double>& inv_wx,
                        const std::vector<double>& inv_wy, int x, int y) {
  const int x0 = std::max(x - radius, 0), x1 = std::min(x + radius, nx - 1);
  const int y0 = std::max(y - radius, 0), y1 = std::min(y + radius, ny - 1);
  double* dst = out + (static_cast<size_t>(x) * ny + y) * c;
  for (int k = 0; k < c; ++k) dst[k] = 0.0;
  for (int i = x0; i <= x1; ++i) {
    for (int j = y0; j <= y1; ++j) {
      const double w = inv_wx[i] * inv_wy[j];
      const double* src = in + (static_cast<size_t>(i) * ny + j) * c;
      for (int k = 0; k < c; ++k) dst[k] += src[k] * w;
    }
  }
}

}  // namespace

std::vector<double> box_smooth(const std::vector<double>& in, int nx, int ny,
                               int channels, int radius, Exec exec) {
  if (radius < 0) throw std::invalid_argument("box_smooth: radius must be >= 0");
  if (in.size() != static_cast<size_t>(nx) * ny * channels)
    throw std::invalid_argument("box_smooth: size mismatch");
  if (radius == 0) return in;

  std::vector<double> inv_wx(nx), inv_wy(ny);
  for (int i = 0; i < nx; ++i) inv_wx[i] = 1.0 / window_len(i, nx, radius);
  for (int j = 0; j < ny; ++j) inv_wy[j] = 1.0 / window_len(j, ny, radius);

  std::vector<double> out(in.size());
  if (exec == Exec::serial) {
    for (int x = 0; x < nx; ++x)
      for (int y = 0; y < ny; ++y)
        smooth_cell(in.data(), out.data(), nx, ny, channels, radius, inv_wx, inv_wy, x, y);
  } else {
#pragma omp parallel for schedule(static)
    for (int x = 0; x < nx; ++x)
      for (int y = 0; y < ny; ++y)
        smooth_cell(in.data(), out.data(), nx, ny, channels, radius, inv_wx, inv_wy, x, y);
  }
  return out;
}

std::vector<double> gaussian_taps(double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_taps: sigma must be > 0");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double norm = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    const double v = std::exp(-(static_cast<double>(k) * k) / (2.0 * sigma * sigma));
    taps[k + radius] = v;
    norm += v;
  }
  for (double& v : taps) v /= norm;
  return taps;
}

namespace {

// Horizontal pass of the separable convolution for one image row.
inline void conv_row_h(const double* in, double* out, int w, int c, int y,
                       const std::vector<double>& taps, int radius) {
  const double* row = in + static_cast<size_t>(y) * w * c;
  double* dst = out + static_cast<size_t>(y) * w * c;
  for (int x = 0; x < w; ++x) {
    for (int k = 0; k < c; ++k) {
      double acc = 0.0;
      for (int dx = -radius; dx <= radius; ++dx) {
        const int sx = x + dx;
        if (sx < 0 || sx >= w) continue;  // zero padding
        acc += taps[dx + radius] * row[static_cast<size_t>(sx) * c + k];
      }
      dst[static_cast<size_t>(x) * c + k] = acc;
    }
  }
}

inline void conv_row_v(const double* in, double* out, int h, int w, int c, int y,
                       const std::vector<double>& taps, int radius) {
  double* dst = out + static_cast<size_t>(y) * w * c;
  for (int x = 0; x < w; ++x) {
    for (int k = 0; k < c; ++k) {
      double acc = 0.0;
      for (int dy = -radius; dy <= radius; ++dy) {
        const int sy = y + dy;
        if (sy < 0 || sy >= h) continue;
        acc += taps[dy + radius] * in[(static_cast<size_t>(sy) * w + x) * c + k];
      }
      dst[static_cast<size_t>(x) * c + k] = acc;
    }
  }
}

}  // namespace

std::vector<double> convolve_gaussian(const std::vector<double>& in, int h, int w,
                                      int c, double sigma, Exec exec) {
  if (in.size() != static_cast<size_t>(h) * w * c)
    throw std::invalid_argument("convolve_gaussian: size mismatch");
  const std::vector<double> taps = gaussian_taps(sigma);
  const int radius = (static_cast<int>(taps.size()) - 1) / 2;

  std::vector<double> tmp(in.size()), out(in.size());
  if (exec == Exec::serial) {
    for (int y = 0; y < h; ++y) conv_row_h(in.data(), tmp.data(), w, c, y, taps, radius);
    for (int y = 0; y < h; ++y) conv_row_v(tmp.data(), out.data(), h, w, c, y, taps, radius);
  } else {
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) conv_row_h(in.data(), tmp.data(), w, c, y, taps, radius);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) conv_row_v(tmp.data(), out.data(), h, w, c, y, taps, radius);
  }
  return out;
}

}  // namespace bevbench
