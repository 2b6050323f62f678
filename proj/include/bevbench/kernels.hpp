#pragma once

#include <vector>

namespace bevbench {

// Execution policy for the data-parallel kernels. Every kernel has a plain
// serial reference implementation and an OpenMP one; both produce bit-identical
// results (parallel paths only gather, with a fixed per-output summation
// order), so `parallel` is safe wherever `serial` is.
enum class Exec { serial, parallel };

// Mass-preserving local box smoothing on an nx*ny*channels array (x-major).
// Each source cell distributes its value uniformly over the in-bounds cells
// within Chebyshev radius `radius` of it, so the per-channel total is
// conserved up to rounding. radius 0 is the identity; in the interior the
// result equals a (2*radius+1)^2 box mean.
std::vector<double> box_smooth(const std::vector<double>& in, int nx, int ny,
                               int channels, int radius, Exec exec);

// 1D Gaussian taps truncated at radius ceil(3*sigma) and renormalized to sum 1.
std::vector<double> gaussian_taps(double sigma);

// Separable truncated-Gaussian convolution with zero padding, applied to every
// channel of an h*w*c row-major array.
std::vector<double> convolve_gaussian(const std::vector<double>& in, int h, int w,
                                      int c, double sigma, Exec exec);

}  // namespace bevbench
