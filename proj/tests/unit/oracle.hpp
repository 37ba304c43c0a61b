#pragma once

// Straightforward re-derivations of the reference detector used as test
// oracles. Nothing here calls the library's filtering code.

#include <algorithm>
#include <vector>

#include "xaieval/core.hpp"
#include "xaieval/refmodel.hpp"

namespace oracle {

inline int reflect(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

inline std::vector<double> local_mean(const xai::Image& img, int size) {
  const int half = size / 2;
  std::vector<double> out(img.size());
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      double s = 0;
      for (int i = -half; i <= half; ++i)
        for (int j = -half; j <= half; ++j) s += img.at(reflect(r + i, img.height), reflect(c + j, img.width));
      out[static_cast<std::size_t>(r) * img.width + c] = s / (size * size);
    }
  }
  return out;
}

inline std::vector<double> correlate(int w, int h, const std::vector<double>& plane, const xai::Kernel& k) {
  const int hr = k.rows / 2;
  const int hc = k.cols / 2;
  std::vector<double> out(plane.size(), 0.0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double s = 0;
      for (int i = 0; i < k.rows; ++i)
        for (int j = 0; j < k.cols; ++j)
          s += k.at(i, j) * plane[static_cast<std::size_t>(reflect(r + i - hr, h)) * w + reflect(c + j - hc, w)];
      out[static_cast<std::size_t>(r) * w + c] = s;
    }
  }
  return out;
}

/// ReLU(kernel correlated with the locally mean-subtracted image), per channel.
inline std::vector<std::vector<double>> features(const xai::Image& img, const xai::FilterBank& bank) {
  const auto mean = local_mean(img, xai::kLocalMeanWindow);
  std::vector<double> centred(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) centred[i] = img.pixels[i] - mean[i];
  std::vector<std::vector<double>> out;
  for (const auto& k : bank.kernels) {
    auto resp = correlate(img.width, img.height, centred, k);
    for (auto& v : resp) v = std::max(v, 0.0);
    out.push_back(std::move(resp));
  }
  return out;
}

inline double score(const std::vector<std::vector<double>>& f, const xai::HeadWeights& head, int skip = -1) {
  double best = -1e300;
  for (std::size_t i = 0; i < f[0].size(); ++i) {
    double d = 0;
    for (std::size_t k = 0; k < f.size(); ++k) {
      if (static_cast<int>(k) != skip) d += head.w[k] * f[k][i];
    }
    best = std::max(best, d);
  }
  return best + head.bias;
}

inline std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Disk of value `contrast` (hard edge) on a flat `base` image.
inline xai::Image disk_image(int w, int h, int cr, int cc, double radius, float base, float contrast) {
  xai::Image img(w, h, base);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      if ((r - cr) * (r - cr) + (c - cc) * (c - cc) <= radius * radius) img.at(r, c) = base + contrast;
  return img;
}

}  // namespace oracle
