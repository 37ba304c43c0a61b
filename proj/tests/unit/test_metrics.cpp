#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "xaieval/errors.hpp"
#include "xaieval/metrics.hpp"

using namespace xai;
using testutil::make_heatmap;

namespace {

// Direct windowed SSIM: for every placement of the Gaussian window that fits,
// weighted means/variances/covariance, averaged with equal weight.
double ssim_dense(const Heatmap& a, const Heatmap& b, const MetricParams& p) {
  const int n = p.ssim_window;
  const int half = n / 2;
  std::vector<double> g(static_cast<std::size_t>(n) * n);
  double total = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double d2 = (i - half) * (i - half) + (j - half) * (j - half);
      g[i * n + j] = std::exp(-d2 / (2 * p.ssim_sigma * p.ssim_sigma));
      total += g[i * n + j];
    }
  }
  for (auto& x : g) x /= total;
  const double c1 = std::pow(p.ssim_k1 * p.dynamic_range, 2);
  const double c2 = std::pow(p.ssim_k2 * p.dynamic_range, 2);
  double sum = 0;
  int count = 0;
  for (int r = 0; r + n <= a.height; ++r) {
    for (int c = 0; c + n <= a.width; ++c) {
      double ma = 0, mb = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          ma += g[i * n + j] * a.at(r + i, c + j);
          mb += g[i * n + j] * b.at(r + i, c + j);
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const double da = a.at(r + i, c + j) - ma;
          const double db = b.at(r + i, c + j) - mb;
          va += g[i * n + j] * da * da;
          vb += g[i * n + j] * db * db;
          cov += g[i * n + j] * da * db;
        }
      sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return sum / count;
}

Heatmap random_map(std::mt19937& gen, int w, int h) {
  std::uniform_real_distribution<float> u(0.f, 1.f);
  std::vector<float> v(static_cast<std::size_t>(w) * h);
  for (auto& x : v) x = u(gen);
  return make_heatmap(w, h, v);
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("mse closed forms") {
    CHECK(mse(make_heatmap(2, 1, {0, 0}), make_heatmap(2, 1, {1, 1})) == 1.0);
    CHECK(mse(make_heatmap(2, 1, {0, 2}), make_heatmap(2, 1, {0, 0})) == 2.0);
    const Heatmap a = make_heatmap(2, 2, {0.1f, 0.2f, 0.3f, 0.4f});
    CHECK(mse(a, a) == 0.0);
    CHECK_THROWS_AS(mse(a, make_heatmap(4, 1, {0, 0, 0, 0})), ShapeError);
  }

  TEST_CASE("ssim of identical maps is one") {
    std::mt19937 gen(1);
    const Heatmap a = random_map(gen, 32, 32);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("ssim of constant zero against constant one") {
    const Heatmap zero = make_heatmap(16, 16, std::vector<float>(256, 0.f));
    const Heatmap one = make_heatmap(16, 16, std::vector<float>(256, 1.f));
    const double c1 = 1e-4;
    CHECK(std::abs(ssim(zero, one) - c1 / (1 + c1)) < 1e-9);
    CHECK(std::abs(ssim(zero, one) - 9.999e-5) < 1e-6);
  }

  TEST_CASE("ssim with one flipped pixel matches the dense oracle") {
    std::mt19937 gen(2);
    const Heatmap a = random_map(gen, 64, 64);
    Heatmap b = a;
    b.values[32 * 64 + 32] = 1.0f - b.values[32 * 64 + 32];
    const double s = ssim(a, b);
    CHECK(s > 0.99);
    CHECK(s < 1.0);
    CHECK(std::abs(s - ssim_dense(a, b, MetricParams{})) < 1e-6);
  }

  TEST_CASE("ssim agrees with the dense oracle on random pairs") {
    std::mt19937 gen(9);
    for (int t = 0; t < 5; ++t) {
      const Heatmap a = random_map(gen, 24, 20);
      const Heatmap b = random_map(gen, 24, 20);
      CHECK(std::abs(ssim(a, b) - ssim_dense(a, b, MetricParams{})) < 1e-6);
    }
  }

  TEST_CASE("ssim and mse are symmetric") {
    std::mt19937 gen(4);
    for (int t = 0; t < 10; ++t) {
      const Heatmap a = random_map(gen, 20, 20);
      const Heatmap b = random_map(gen, 20, 20);
      CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-12);
      CHECK(std::abs(mse(a, b) - mse(b, a)) < 1e-12);
    }
  }

  TEST_CASE("ssim input checks") {
    const Heatmap small = make_heatmap(8, 8, std::vector<float>(64, 0.f));
    CHECK_THROWS_AS(ssim(small, small), InputTooSmall);
    CHECK_THROWS_AS(ssim(make_heatmap(16, 16, std::vector<float>(256, 0.f)),
                         make_heatmap(16, 12, std::vector<float>(192, 0.f))),
                    ShapeError);
  }

  TEST_CASE("box iou") {
    CHECK(iou_box(Roi{0, 0, 4, 4}, Roi{0, 0, 4, 4}) == 1.0);
    CHECK(iou_box(Roi{0, 0, 2, 2}, Roi{5, 5, 7, 7}) == 0.0);
    CHECK(std::abs(iou_box(Roi{0, 0, 4, 4}, Roi{2, 2, 6, 6}) - 1.0 / 7.0) < 1e-12);
  }

  TEST_CASE("box iou equals mask iou of rasterized boxes") {
    std::mt19937 gen(7);
    auto rand_roi = [&](int w, int h) {
      int r0 = static_cast<int>(gen() % h), r1 = static_cast<int>(gen() % h);
      int c0 = static_cast<int>(gen() % w), c1 = static_cast<int>(gen() % w);
      if (r0 > r1) std::swap(r0, r1);
      if (c0 > c1) std::swap(c0, c1);
      return Roi{r0, c0, r1 + 1, c1 + 1};
    };
    for (int t = 0; t < 1500; ++t) {
      const Roi a = rand_roi(24, 18);
      const Roi b = rand_roi(24, 18);
      const double want = iou_mask(Mask::from_roi(a, 24, 18), Mask::from_roi(b, 24, 18));
      REQUIRE(std::abs(iou_box(a, b) - want) < 1e-12);
    }
  }

  TEST_CASE("mask iou conventions") {
    Mask a(4, 4), b(4, 4);
    CHECK(iou_mask(a, b) == 1.0);
    for (int i = 0; i < 16; ++i) {
      a.bits[i] = ((i / 4 + i % 4) % 2) ? 1 : 0;
      b.bits[i] = 1 - a.bits[i];
    }
    CHECK(iou_mask(a, a) == 1.0);
    CHECK(iou_mask(a, b) == 0.0);
    CHECK_THROWS_AS(iou_mask(a, Mask(2, 8)), ShapeError);
  }

  TEST_CASE("spearman closed forms") {
    const std::vector<float> x{1, 2, 3, 4};
    const std::vector<float> y{1, 2, 4, 3};
    CHECK(std::abs(*spearman(x, y) - 0.8) < 1e-12);
    CHECK(std::abs(*spearman(x, x) - 1.0) < 1e-12);
    const std::vector<float> rev{4, 3, 2, 1};
    CHECK(std::abs(*spearman(x, rev) + 1.0) < 1e-12);
    const std::vector<float> flat{2, 2, 2, 2};
    CHECK_FALSE(spearman(x, flat).has_value());
  }

  TEST_CASE("midranks average ties") {
    const std::vector<float> v{3, 1, 3, 2};
    CHECK(midranks(v) == std::vector<double>{3.5, 1, 3.5, 2});
  }

  TEST_CASE("spearman is invariant under increasing transforms") {
    std::mt19937 gen(12);
    std::uniform_real_distribution<float> u(0.f, 1.f);
    std::vector<float> a(200), b(200), ta(200);
    for (int i = 0; i < 200; ++i) {
      a[i] = std::round(u(gen) * 20) / 20;  // plenty of ties
      b[i] = u(gen) + 0.5f * a[i];
      ta[i] = std::exp(3 * a[i]) + 1;
    }
    CHECK(std::abs(*spearman(a, b) - *spearman(ta, b)) < 1e-12);
  }
}
