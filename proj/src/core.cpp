#include "xaieval/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "xaieval/errors.hpp"

namespace xai {

Image::Image(int w, int h, std::vector<float> px) : width(w), height(h), pixels(std::move(px)) {
  if (w <= 0 || h <= 0 || pixels.size() != static_cast<std::size_t>(w) * h) {
    throw ShapeError("image buffer of " + std::to_string(pixels.size()) + " samples does not match " +
                     std::to_string(w) + "x" + std::to_string(h));
  }
}

void validate_image(const Image& img) {
  if (img.width < 8 || img.height < 8) {
    throw ShapeError("image must be at least 8x8, got " + std::to_string(img.width) + "x" +
                     std::to_string(img.height));
  }
  if (img.pixels.size() != static_cast<std::size_t>(img.width) * img.height) {
    throw ShapeError("image pixel count does not match its geometry");
  }
  for (float v : img.pixels) {
    if (!std::isfinite(v)) throw ConfigError("image contains a non-finite sample");
  }
}

Heatmap::Heatmap(int w, int h, std::vector<float> v, bool norm)
    : width(w), height(h), values(std::move(v)), normalized(norm) {
  if (w <= 0 || h <= 0 || values.size() != static_cast<std::size_t>(w) * h) {
    throw ShapeError("heatmap buffer does not match " + std::to_string(w) + "x" + std::to_string(h));
  }
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

Mask Mask::from_roi(const Roi& roi, int width, int height) {
  Mask m(width, height);
  for (int r = std::max(roi.row0, 0); r < std::min(roi.row1, height); ++r) {
    for (int c = std::max(roi.col0, 0); c < std::min(roi.col1, width); ++c) {
      m.bits[static_cast<std::size_t>(r) * width + c] = 1;
    }
  }
  return m;
}

Mask Mask::from_threshold(int width, int height, std::span<const float> values, float threshold) {
  Mask m(width, height);
  for (std::size_t i = 0; i < values.size(); ++i) m.bits[i] = values[i] >= threshold ? 1 : 0;
  return m;
}

void MetricParams::validate() const {
  if (ssim_window < 3 || ssim_window % 2 == 0) throw ConfigError("ssim_window must be odd and >= 3");
  if (!(ssim_k1 > 0.0) || !(ssim_k2 > 0.0)) throw ConfigError("ssim_k1 and ssim_k2 must be positive");
  if (!(ssim_sigma > 0.0)) throw ConfigError("ssim_sigma must be positive");
  if (!(dynamic_range > 0.0)) throw ConfigError("dynamic_range must be positive");
  if (!(binarize_quantile > 0.0 && binarize_quantile < 1.0)) {
    throw ConfigError("binarize_quantile must lie in (0,1)");
  }
}

std::size_t argmax(std::span<const float> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

Heatmap normalize_heatmap(const Heatmap& h) {
  float lo = 0.0f;
  float hi = 0.0f;
  bool first = true;
  for (float v : h.values) {
    if (!std::isfinite(v)) throw InvalidHeatmap("heatmap contains a non-finite value");
    if (first) {
      lo = hi = v;
      first = false;
    } else {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  Heatmap out(h.width, h.height, std::vector<float>(h.values.size(), 0.0f), true);
  if (first || hi == lo) return out;
  const double span = static_cast<double>(hi) - lo;
  for (std::size_t i = 0; i < h.values.size(); ++i) {
    out.values[i] = static_cast<float>((static_cast<double>(h.values[i]) - lo) / span);
  }
  // Pin the extremes so a second pass is an exact identity.
  for (std::size_t i = 0; i < h.values.size(); ++i) {
    if (h.values[i] == hi) out.values[i] = 1.0f;
    if (h.values[i] == lo) out.values[i] = 0.0f;
  }
  return out;
}

Roi extract_peak_roi(const Heatmap& h, int box_height, int box_width) {
  if (box_height <= 0 || box_width <= 0 || box_height > h.height || box_width > h.width) {
    throw InvalidRoiSize("box " + std::to_string(box_height) + "x" + std::to_string(box_width) +
                         " does not fit a " + std::to_string(h.height) + "x" + std::to_string(h.width) +
                         " map");
  }
  const std::size_t peak = argmax(h.values);
  const int r = static_cast<int>(peak / h.width);
  const int c = static_cast<int>(peak % h.width);
  const int row0 = std::clamp(r - box_height / 2, 0, h.height - box_height);
  const int col0 = std::clamp(c - box_width / 2, 0, h.width - box_width);
  return Roi{row0, col0, row0 + box_height, col0 + box_width};
}

double sorted_quantile(std::span<const float> sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return static_cast<double>(sorted[lo]) + frac * (static_cast<double>(sorted[hi]) - sorted[lo]);
}

Mask binarize_top_quantile(const Heatmap& h, double q) {
  if (!(q > 0.0 && q < 1.0)) throw InvalidQuantile("quantile must lie in (0,1), got " + std::to_string(q));
  std::vector<float> sorted = h.values;
  std::sort(sorted.begin(), sorted.end());
  const double threshold = sorted_quantile(sorted, q);
  Mask m(h.width, h.height);
  for (std::size_t i = 0; i < h.values.size(); ++i) {
    const double v = h.values[i];
    m.bits[i] = (v > 0.0 && v >= threshold) ? 1 : 0;
  }
  return m;
}

}  // namespace xai
