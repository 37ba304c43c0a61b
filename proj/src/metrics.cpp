#include "xaieval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "xaieval/errors.hpp"

namespace xai {

namespace {

void require_same_shape(int wa, int ha, int wb, int hb) {
  if (wa != wb || ha != hb) {
    throw ShapeError(std::to_string(wa) + "x" + std::to_string(ha) + " vs " + std::to_string(wb) + "x" +
                     std::to_string(hb));
  }
}

// Valid-region separable filtering with a normalized 1-D window.
std::vector<double> filter_valid(int width, int height, const std::vector<double>& plane,
                                 const std::vector<double>& taps) {
  const int n = static_cast<int>(taps.size());
  const int ow = width - n + 1;
  const int oh = height - n + 1;
  std::vector<double> rows(static_cast<std::size_t>(ow) * height);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (int t = 0; t < n; ++t) acc += taps[t] * plane[static_cast<std::size_t>(r) * width + c + t];
      rows[static_cast<std::size_t>(r) * ow + c] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int r = 0; r < oh; ++r) {
    for (int c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (int t = 0; t < n; ++t) acc += taps[t] * rows[static_cast<std::size_t>(r + t) * ow + c];
      out[static_cast<std::size_t>(r) * ow + c] = acc;
    }
  }
  return out;
}

}  // namespace

double mse(const Heatmap& a, const Heatmap& b) {
  require_same_shape(a.width, a.height, b.width, b.height);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = static_cast<double>(a.values[i]) - b.values[i];
    acc += d * d;
  }
  return a.values.empty() ? 0.0 : acc / static_cast<double>(a.values.size());
}

double ssim(const Heatmap& a, const Heatmap& b, const MetricParams& p) {
  require_same_shape(a.width, a.height, b.width, b.height);
  p.validate();
  if (a.width < p.ssim_window || a.height < p.ssim_window) {
    throw InputTooSmall("SSIM window " + std::to_string(p.ssim_window) + " exceeds a " +
                        std::to_string(a.width) + "x" + std::to_string(a.height) + " map");
  }
  const int half = p.ssim_window / 2;
  std::vector<double> taps(p.ssim_window);
  for (int t = -half; t <= half; ++t) taps[t + half] = std::exp(-0.5 * t * t / (p.ssim_sigma * p.ssim_sigma));
  const double total = std::accumulate(taps.begin(), taps.end(), 0.0);
  for (double& t : taps) t /= total;

  const std::size_t n = a.values.size();
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = a.values[i];
    y[i] = b.values[i];
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(a.width, a.height, x, taps);
  const auto my = filter_valid(a.width, a.height, y, taps);
  const auto mxx = filter_valid(a.width, a.height, xx, taps);
  const auto myy = filter_valid(a.width, a.height, yy, taps);
  const auto mxy = filter_valid(a.width, a.height, xy, taps);

  const double c1 = (p.ssim_k1 * p.dynamic_range) * (p.ssim_k1 * p.dynamic_range);
  const double c2 = (p.ssim_k2 * p.dynamic_range) * (p.ssim_k2 * p.dynamic_range);
  double acc = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = mxx[i] - mx[i] * mx[i];
    const double vy = myy[i] - my[i] * my[i];
    const double cxy = mxy[i] - mx[i] * my[i];
    const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2);
    const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
    acc += num / den;
  }
  return acc / static_cast<double>(mx.size());
}

double iou_box(const Roi& a, const Roi& b) {
  const long ir = std::max(0, std::min(a.row1, b.row1) - std::max(a.row0, b.row0));
  const long ic = std::max(0, std::min(a.col1, b.col1) - std::max(a.col0, b.col0));
  const long inter = ir * ic;
  const long uni = a.area() + b.area() - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
}

double iou_mask(const Mask& a, const Mask& b) {
  require_same_shape(a.width, a.height, b.width, b.height);
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    inter += (a.bits[i] & b.bits[i]);
    uni += (a.bits[i] | b.bits[i]);
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<double> midranks(std::span<const float> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::ranges::stable_sort(order, [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1 .. j
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = mid;
    i = j;
  }
  return ranks;
}

std::optional<double> spearman(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ShapeError("spearman inputs differ in length");
  if (a.size() < 2) return std::nullopt;
  const auto ra = midranks(a);
  const auto rb = midranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::optional<double> spearman(const Heatmap& h, std::span<const float> g) {
  if (h.values.size() != g.size()) throw ShapeError("spearman inputs differ in geometry");
  return spearman(std::span<const float>(h.values), g);
}

}  // namespace xai
