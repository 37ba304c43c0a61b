#include <cmath>

#include "doctest.h"
#include "xaieval/errors.hpp"
#include "xaieval/phantom.hpp"

using namespace xai;

TEST_SUITE("phantom") {
  TEST_CASE("same seed and index give a bit-identical case") {
    PhantomConfig cfg;
    cfg.seed = 42;
    const Case a = generate_case(cfg, true, 3);
    const Case b = generate_case(cfg, true, 3);
    CHECK(a.image == b.image);
    CHECK(a.clean == b.clean);
    CHECK(a.truth->box == b.truth->box);
    CHECK(a.truth->mask == b.truth->mask);
    const Case c = generate_case(cfg, true, 4);
    CHECK_FALSE(a.image == c.image);
  }

  TEST_CASE("huge dose reproduces the noiseless composite") {
    PhantomConfig cfg;
    cfg.dose = 1e9;
    int within = 0;
    int total = 0;
    for (int i = 0; i < 2; ++i) {
      const Case c = generate_case(cfg, i == 0, i);
      for (std::size_t p = 0; p < c.image.size() && total < 10000; p += 3) {
        within += std::abs(c.image.pixels[p] - c.clean.pixels[p]) < 1e-3f ? 1 : 0;
        ++total;
      }
    }
    CHECK(total == 10000);
    CHECK(within >= 9990);
  }

  TEST_CASE("background-only cases average to the 0.5 baseline") {
    PhantomConfig cfg;
    cfg.seed = 5;
    double sum = 0;
    for (int i = 0; i < 100; ++i) {
      const Case c = generate_case(cfg, false, i);
      CHECK_FALSE(c.truth.has_value());
      CHECK_FALSE(c.has_lesion);
      double s = 0;
      for (float v : c.image.pixels) s += v;
      sum += s / static_cast<double>(c.image.size());
    }
    CHECK(std::abs(sum / 100 - 0.5) < 0.02);
  }

  TEST_CASE("dataset lesion counts") {
    PhantomConfig cfg;
    cfg.width = cfg.height = 64;
    int lesions = 0;
    for (bool b : lesion_layout(150, 0.5)) lesions += b ? 1 : 0;
    CHECK(lesions == 75);
    const auto two = generate_dataset(cfg, 2, 0.5);
    CHECK(two.size() == 2);
    CHECK(two[0].has_lesion != two[1].has_lesion);
    const auto none = generate_dataset(cfg, 10, 0.0);
    for (const auto& c : none) CHECK_FALSE(c.truth.has_value());
    CHECK(none[3].id == "case-0003");
  }

  TEST_CASE("truth box bounds the lesion and the mask stays in box or context") {
    PhantomConfig cfg;
    cfg.seed = 9;
    for (int i = 0; i < 20; ++i) {
      const Case c = generate_case(cfg, true, i);
      REQUIRE(c.truth.has_value());
      const auto& t = *c.truth;
      CHECK(t.box.rows() == 2 * cfg.lesion_radius + 1);
      CHECK(t.box.cols() == 2 * cfg.lesion_radius + 1);
      CHECK(t.center_row >= cfg.min_center());
      CHECK(t.center_row <= cfg.height - 1 - cfg.min_center());
      for (int r = 0; r < cfg.height; ++r) {
        for (int col = 0; col < cfg.width; ++col) {
          const double d = std::hypot(r - t.center_row, col - t.center_col);
          if (lesion_profile(d, cfg.lesion_radius, cfg.edge_softness) > 0.5) REQUIRE(t.box.contains(r, col));
          const std::size_t i2 = static_cast<std::size_t>(r) * cfg.width + col;
          if (t.mask[i2] > 0) REQUIRE((t.box.contains(r, col) || (*t.context)[i2] > 0));
        }
      }
    }
  }

  TEST_CASE("lesion that cannot fit is a config error") {
    PhantomConfig cfg;
    cfg.width = cfg.height = 16;
    cfg.lesion_radius = 5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.dose = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.lesion_contrast = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }

  TEST_CASE("photon noise variance scales with intensity over dose") {
    Image flat(128, 128, 0.5f);
    const Image noisy = apply_photon_noise(flat, 1.0, 5e-4, 77);
    double s = 0, s2 = 0;
    for (float v : noisy.pixels) {
      s += v - 0.5;
      s2 += (v - 0.5) * (v - 0.5);
    }
    const double n = static_cast<double>(noisy.size());
    const double var = s2 / n - (s / n) * (s / n);
    CHECK(var == doctest::Approx(0.5 * 5e-4).epsilon(0.05));
  }
}
