#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace xai {

/// Grayscale image, row-major float32 samples in arbitrary non-negative units.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int w, int h, float fill = 0.0f)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}
  Image(int w, int h, std::vector<float> px);

  float at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * width + c]; }
  float& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * width + c]; }
  std::size_t size() const { return pixels.size(); }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Throws ShapeError/ConfigError unless width,height >= 8 and every sample is finite.
void validate_image(const Image& img);

/// Per-pixel saliency values with the geometry of the image that produced them.
struct Heatmap {
  int width = 0;
  int height = 0;
  std::vector<float> values;
  bool normalized = false;

  Heatmap() = default;
  Heatmap(int w, int h, std::vector<float> v, bool norm = false);

  float at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }
  std::size_t size() const { return values.size(); }

  friend bool operator==(const Heatmap&, const Heatmap&) = default;
};

/// Half-open pixel rectangle [row0,row1) x [col0,col1).
struct Roi {
  int row0 = 0;
  int col0 = 0;
  int row1 = 0;
  int col1 = 0;

  int rows() const { return row1 - row0; }
  int cols() const { return col1 - col0; }
  long area() const { return static_cast<long>(rows()) * cols(); }
  bool contains(int r, int c) const { return r >= row0 && r < row1 && c >= col0 && c < col1; }
  bool valid_in(int width, int height) const {
    return 0 <= row0 && row0 < row1 && row1 <= height && 0 <= col0 && col0 < col1 && col1 <= width;
  }

  friend bool operator==(const Roi&, const Roi&) = default;
};

/// Binary mask; one byte per pixel, 0 or 1.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

  std::size_t count() const;
  static Mask from_roi(const Roi& roi, int width, int height);
  /// Pixels where `values >= threshold`.
  static Mask from_threshold(int width, int height, std::span<const float> values, float threshold);

  friend bool operator==(const Mask&, const Mask&) = default;
};

/// Two-level ground truth: the lesion itself (box, soft mask) and an optional
/// contextual annulus around it.
struct GroundTruth {
  int center_row = 0;
  int center_col = 0;
  int radius = 0;
  Roi box;
  std::vector<float> mask;                    // soft, in [0,1], image geometry
  std::optional<std::vector<float>> context;  // binary annulus, image geometry
};

struct MetricParams {
  double ssim_k1 = 0.01;
  double ssim_k2 = 0.03;
  int ssim_window = 11;
  double ssim_sigma = 1.5;
  double dynamic_range = 1.0;
  double binarize_quantile = 0.95;

  /// Throws ConfigError on an even/small window, non-positive constants or a quantile outside (0,1).
  void validate() const;
};

/// Index of the largest value; ties go to the smallest row-major index.
std::size_t argmax(std::span<const float> values);

/// Min-max rescale to [0,1]. A constant map becomes all zeros.
Heatmap normalize_heatmap(const Heatmap& h);

/// Box of exactly box_height x box_width centred on the argmax of `h`,
/// translated (never shrunk) so it lies inside the map.
Roi extract_peak_roi(const Heatmap& h, int box_height, int box_width);

/// Linear-interpolation quantile of already sorted values (numpy's default rule).
double sorted_quantile(std::span<const float> sorted, double q);

/// Mask of positive values at or above the q-quantile of `h`.
Mask binarize_top_quantile(const Heatmap& h, double q);

}  // namespace xai
