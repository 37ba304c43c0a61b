#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "oracle.hpp"
#include "xaieval/cam.hpp"
#include "xaieval/errors.hpp"
#include "xaieval/metrics.hpp"
#include "xaieval/refmodel.hpp"

using namespace xai;

TEST_SUITE("refmodel") {
  TEST_CASE("filter bank kernels are zero-mean and unit-norm") {
    const FilterBank bank = default_filter_bank();
    REQUIRE(bank.size() == kChannels);
    for (const auto& k : bank.kernels) {
      double s = 0, s2 = 0;
      for (double v : k.weights) {
        s += v;
        s2 += v * v;
      }
      CHECK(std::abs(s) < 1e-9);
      CHECK(std::abs(s2 - 1.0) < 1e-9);
      CHECK(k.rows % 2 == 1);
      CHECK(k.cols % 2 == 1);
    }
  }

  TEST_CASE("constant image gives zero features") {
    const RefModel m;
    const FeatureStack f = m.feature_maps(Image(64, 64, 0.42f));
    for (float v : f.data) REQUIRE(std::abs(v) < 1e-6f);
  }

  TEST_CASE("features match the dense correlation oracle") {
    const RefModel m;
    const Image img = oracle::disk_image(64, 64, 30, 33, 5, 0.5f, 0.25f);
    const FeatureStack f = m.feature_maps(img);
    const auto want = oracle::features(img, m.bank());
    for (int k = 0; k < kChannels; ++k) {
      const auto ch = f.channel(k);
      for (std::size_t i = 0; i < ch.size(); ++i) REQUIRE(std::abs(ch[i] - want[k][i]) < 1e-5);
    }
    // Radius-5 matched filter peaks at the disk centre.
    CHECK(oracle::argmax(want[1]) == 30 * 64 + 33);
    CHECK(xai::argmax(f.channel(1)) == 30 * 64 + 33);
  }

  TEST_CASE("horizontal step edge excites the horizontal edge channel most") {
    const RefModel m;
    Image img(64, 64, 0.4f);
    for (int r = 32; r < 64; ++r)
      for (int c = 0; c < 64; ++c) img.at(r, c) = 0.6f;
    const auto f = oracle::features(img, m.bank());
    std::vector<double> energy;
    for (const auto& ch : f) {
      double e = 0;
      for (double v : ch) e += v * v;
      energy.push_back(e);
    }
    CHECK(oracle::argmax(energy) == 4);
    const FeatureStack lib = m.feature_maps(img);
    double lib_e4 = 0;
    for (float v : lib.channel(4)) lib_e4 += static_cast<double>(v) * v;
    CHECK(lib_e4 == doctest::Approx(energy[4]).epsilon(1e-5));
  }

  TEST_CASE("blank image is not a detection") {
    const RefModel m;
    const Prediction p = m.predict(Image(64, 64, 0.5f));
    CHECK_FALSE(p.present);
    CHECK_FALSE(p.box.has_value());
    CHECK(p.score == doctest::Approx(m.head().bias));
  }

  TEST_CASE("nominal lesion cases are detected and localized") {
    const RefModel m;
    PhantomConfig cfg;
    cfg.seed = 21;
    int hits = 0;
    for (int i = 0; i < 50; ++i) {
      const Case c = generate_case(cfg, true, i);
      const Prediction p = m.predict(c.image);
      if (p.present && p.box && iou_box(*p.box, c.truth->box) >= 0.5) ++hits;
    }
    CHECK(hits >= 48);  // at least 95%
  }

  TEST_CASE("joint positive scaling of the head changes nothing observable") {
    HeadWeights h = default_head();
    HeadWeights h2 = h;
    for (auto& w : h2.w) w *= 2;
    h2.bias *= 2;
    h2.threshold *= 2;
    const RefModel a(default_filter_bank(), h), b(default_filter_bank(), h2);
    PhantomConfig cfg;
    cfg.seed = 8;
    for (int i = 0; i < 10; ++i) {
      const Case c = generate_case(cfg, i % 2 == 0, i);
      const Prediction pa = a.predict(c.image), pb = b.predict(c.image);
      CHECK(pa.present == pb.present);
      CHECK(pa.box == pb.box);
      CHECK(a.whitebox_attribution(c.image).values == b.whitebox_attribution(c.image).values);
    }
  }

  TEST_CASE("white-box attribution") {
    const RefModel m;
    // Evidence confined to the distractor channels carries no head weight.
    // (A pixel-space step edge would also excite the disk filters near the edge.)
    FeatureStack distractors{32, 32, kChannels, std::vector<float>(32 * 32 * kChannels, 0.f)};
    for (int k = kSignalChannels; k < kChannels; ++k)
      for (std::size_t i = 0; i < distractors.plane_size(); ++i)
        distractors.channel(k)[i] = static_cast<float>((i * (k + 3)) % 17);
    for (float v : m.whitebox_from(distractors).values) REQUIRE(v == 0.0f);

    PhantomConfig cfg;
    const Case c = generate_case(cfg, true, 1);
    const Heatmap att = m.whitebox_attribution(c.image);
    const Prediction p = m.predict(c.image);
    CHECK(xai::argmax(att.values) == static_cast<std::size_t>(p.peak_row * c.image.width + p.peak_col));

    HeadWeights one_hot{{0, 0, 1, 0, 0, 0, 0}, 0.0, 1.0};
    const RefModel m2(default_filter_bank(), one_hot);
    const FeatureStack f = m2.feature_maps(c.image);
    const auto ch = f.channel(2);
    const Heatmap want = normalize_heatmap(Heatmap(c.image.width, c.image.height, std::vector<float>(ch.begin(), ch.end())));
    CHECK(m2.whitebox_attribution(c.image).values == want.values);
  }

  TEST_CASE("channel ablation") {
    const RefModel m;
    PhantomConfig cfg;
    const Case c = testutil::clean_case(cfg, true, 2);
    const FeatureStack f = m.feature_maps(c.image);
    const FeatureStack once = ablate_channel(f, 1);
    CHECK(ablate_channel(once, 1) == once);
    for (float v : once.channel(1)) REQUIRE(v == 0.0f);
    CHECK(m.score_from(ablate_channel(f, 5)) == m.score_from(f));
    CHECK_THROWS_AS(ablate_channel(f, 7), BadChannel);
    CHECK_THROWS_AS(ablate_channel(f, -1), BadChannel);

    // Oracle recomputation of the radius-5 drop with dense correlation.
    const auto of = oracle::features(c.image, m.bank());
    const double y = oracle::score(of, m.head());
    const double y1 = oracle::score(of, m.head(), 1);
    CHECK(m.score_from(f) == doctest::Approx(y).epsilon(1e-5));
    CHECK(m.score_from(once) == doctest::Approx(y1).epsilon(1e-5));
    CHECK((y - y1) > 0.5 * (y - m.head().bias));
  }

  TEST_CASE("randomization modes") {
    const HeadWeights h = default_head();
    const FilterBank bank = default_filter_bank();
    auto [same, bank0] = randomize_weights(h, bank, RandomizationMode::HeadNoise, 0.0, 3);
    CHECK(same == h);
    auto a = randomize_weights(h, bank, RandomizationMode::KernelNoise, 0.3, 9);
    auto b = randomize_weights(h, bank, RandomizationMode::KernelNoise, 0.3, 9);
    CHECK(a.first == b.first);
    for (int k = 0; k < kChannels; ++k) CHECK(a.second.kernels[k].weights == b.second.kernels[k].weights);
    for (const auto& k : a.second.kernels) {
      double s = 0, s2 = 0;
      for (double v : k.weights) {
        s += v;
        s2 += v * v;
      }
      CHECK(std::abs(s) < 1e-9);
      CHECK(std::abs(s2 - 1) < 1e-9);
    }
    auto r1 = randomize_weights(h, bank, RandomizationMode::HeadReinit, 1.0, 5);
    auto r2 = randomize_weights(h, bank, RandomizationMode::HeadReinit, 1.0, 6);
    CHECK_FALSE(r1.first.w == r2.first.w);
    CHECK(r1.first.threshold == h.threshold);
    CHECK(parse_randomization_mode("head-reinit") == RandomizationMode::HeadReinit);
    CHECK(to_string(RandomizationMode::KernelNoise) == "kernel-noise");
  }

  TEST_CASE("eigen cam is untouched by head-only randomization") {
    const RefModel m;
    PhantomConfig cfg;
    const Case c = generate_case(cfg, true, 4);
    const RefModel r = m.randomized(RandomizationMode::HeadReinit, 1.0, 17);
    CHECK(eigen_cam(m.feature_maps(c.image)).values == eigen_cam(r.feature_maps(c.image)).values);
  }

  TEST_CASE("prediction is translation-equivariant away from borders") {
    const RefModel m;
    const Image a = oracle::disk_image(96, 96, 40, 45, 5, 0.5f, 0.25f);
    const Image b = oracle::disk_image(96, 96, 40 + 6, 45 - 4, 5, 0.5f, 0.25f);
    const Prediction pa = m.predict(a), pb = m.predict(b);
    REQUIRE(pa.box.has_value());
    REQUIRE(pb.box.has_value());
    CHECK(pb.box->row0 == pa.box->row0 + 6);
    CHECK(pb.box->col0 == pa.box->col0 - 4);
  }

  TEST_CASE("small images are rejected") {
    const RefModel m;
    CHECK_THROWS_AS(m.feature_maps(Image(8, 8, 0.5f)), InputTooSmall);
  }

  TEST_CASE("frozen default threshold reproduces its calibration") {
    const RefModel m;
    const Calibration c = calibrate_threshold(PhantomConfig{}, m, 200, 1);
    CHECK(c.threshold == kDefaultThreshold);
    CHECK(c.background_p95 < c.lesion_p05);
  }
}
