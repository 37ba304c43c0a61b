#include "xaieval/filters.hpp"

#include <cmath>
#include <cstddef>

#include "xaieval/errors.hpp"

namespace xai {

int mirror_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

namespace {

// Copies the plane into a buffer padded by (pad_r, pad_c) on every side.
std::vector<double> mirror_pad(int width, int height, std::span<const double> plane, int pad_r,
                               int pad_c) {
  const int pw = width + 2 * pad_c;
  const int ph = height + 2 * pad_r;
  std::vector<double> out(static_cast<std::size_t>(pw) * ph);
  for (int r = 0; r < ph; ++r) {
    const int sr = mirror_index(r - pad_r, height);
    for (int c = 0; c < pw; ++c) {
      out[static_cast<std::size_t>(r) * pw + c] =
          plane[static_cast<std::size_t>(sr) * width + mirror_index(c - pad_c, width)];
    }
  }
  return out;
}

std::vector<double> convolve_rows(int width, int height, std::span<const double> plane,
                                  std::span<const double> taps) {
  const int radius = static_cast<int>(taps.size() / 2);
  std::vector<double> out(plane.size());
  for (int r = 0; r < height; ++r) {
    const double* row = plane.data() + static_cast<std::size_t>(r) * width;
    for (int c = 0; c < width; ++c) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t) acc += taps[t + radius] * row[mirror_index(c + t, width)];
      out[static_cast<std::size_t>(r) * width + c] = acc;
    }
  }
  return out;
}

std::vector<double> convolve_cols(int width, int height, std::span<const double> plane,
                                  std::span<const double> taps) {
  const int radius = static_cast<int>(taps.size() / 2);
  std::vector<double> out(plane.size());
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t) {
        acc += taps[t + radius] * plane[static_cast<std::size_t>(mirror_index(r + t, height)) * width + c];
      }
      out[static_cast<std::size_t>(r) * width + c] = acc;
    }
  }
  return out;
}

void check_kernel(const Kernel& k) {
  if (k.rows <= 0 || k.cols <= 0 || k.rows % 2 == 0 || k.cols % 2 == 0 ||
      k.weights.size() != static_cast<std::size_t>(k.rows) * k.cols) {
    throw ConfigError("kernel dimensions must be odd and match its weights");
  }
}

}  // namespace

std::vector<double> gaussian_blur(int width, int height, std::span<const double> plane, double sigma) {
  if (!(sigma > 0.0)) return {plane.begin(), plane.end()};
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double total = 0.0;
  for (int t = -radius; t <= radius; ++t) {
    taps[t + radius] = std::exp(-0.5 * t * t / (sigma * sigma));
    total += taps[t + radius];
  }
  for (double& t : taps) t /= total;
  const auto rows = convolve_rows(width, height, plane, taps);
  return convolve_cols(width, height, rows, taps);
}

std::vector<double> box_mean(int width, int height, std::span<const double> plane, int size) {
  const std::vector<double> taps(size, 1.0 / size);
  const auto rows = convolve_rows(width, height, plane, taps);
  return convolve_cols(width, height, rows, taps);
}

std::vector<double> correlate(int width, int height, std::span<const double> plane, const Kernel& k) {
  check_kernel(k);
  const int hr = k.rows / 2;
  const int hc = k.cols / 2;

  struct Run {
    int row;    // kernel row
    int begin;  // kernel col, inclusive
    int end;    // kernel col, exclusive
    double weight;
  };
  std::vector<Run> runs;
  for (int r = 0; r < k.rows; ++r) {
    int c = 0;
    while (c < k.cols) {
      const double w = k.at(r, c);
      int e = c + 1;
      while (e < k.cols && k.at(r, e) == w) ++e;
      if (w != 0.0) runs.push_back({r, c, e, w});
      c = e;
    }
  }

  const std::vector<double> padded = mirror_pad(width, height, plane, hr, hc);
  const int pw = width + 2 * hc;
  const int ph = height + 2 * hr;
  // prefix[r][c] = sum of padded row r over columns [0, c).
  std::vector<double> prefix(static_cast<std::size_t>(ph) * (pw + 1), 0.0);
  for (int r = 0; r < ph; ++r) {
    double* pre = prefix.data() + static_cast<std::size_t>(r) * (pw + 1);
    const double* row = padded.data() + static_cast<std::size_t>(r) * pw;
    for (int c = 0; c < pw; ++c) pre[c + 1] = pre[c] + row[c];
  }

  std::vector<double> out(static_cast<std::size_t>(width) * height, 0.0);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      double acc = 0.0;
      for (const Run& run : runs) {
        const double* pre = prefix.data() + static_cast<std::size_t>(r + run.row) * (pw + 1);
        acc += run.weight * (pre[c + run.end] - pre[c + run.begin]);
      }
      out[static_cast<std::size_t>(r) * width + c] = acc;
    }
  }
  return out;
}

std::vector<double> correlate_dense(int width, int height, std::span<const double> plane,
                                    const Kernel& k) {
  check_kernel(k);
  const int hr = k.rows / 2;
  const int hc = k.cols / 2;
  std::vector<double> out(static_cast<std::size_t>(width) * height, 0.0);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      double acc = 0.0;
      for (int i = 0; i < k.rows; ++i) {
        const int sr = mirror_index(r + i - hr, height);
        for (int j = 0; j < k.cols; ++j) {
          acc += k.at(i, j) * plane[static_cast<std::size_t>(sr) * width + mirror_index(c + j - hc, width)];
        }
      }
      out[static_cast<std::size_t>(r) * width + c] = acc;
    }
  }
  return out;
}

}  // namespace xai
