#pragma once

#include <span>
#include <vector>

namespace xai {

// Low-level planar filtering shared by the phantom generator and the
// reference detector. Planes are row-major double buffers; every filter uses
// mirror padding (reflection without repeating the edge sample).

/// Maps any integer index onto [0, n) by repeated mirror reflection.
int mirror_index(int i, int n);

/// Separable Gaussian blur, kernel truncated at ceil(4 sigma).
std::vector<double> gaussian_blur(int width, int height, std::span<const double> plane, double sigma);

/// Mean over a size x size window centred on each pixel (size odd).
std::vector<double> box_mean(int width, int height, std::span<const double> plane, int size);

/// A 2-D correlation kernel with odd dimensions, stored row-major.
struct Kernel {
  int rows = 0;
  int cols = 0;
  std::vector<double> weights;

  double at(int r, int c) const { return weights[static_cast<std::size_t>(r) * cols + c]; }
};

/// Same-size correlation out(p) = sum_q k(q) * in(p + q - centre).
///
/// Each kernel row is split into runs of equal weight and evaluated with
/// per-row prefix sums, so piecewise-constant kernels (disks, steps) cost
/// O(runs) per pixel instead of O(area).
std::vector<double> correlate(int width, int height, std::span<const double> plane, const Kernel& k);

/// Straightforward O(area) correlation; the reference the fast path is tested against.
std::vector<double> correlate_dense(int width, int height, std::span<const double> plane,
                                    const Kernel& k);

}  // namespace xai
