#include "xaieval/phantom.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "xaieval/errors.hpp"
#include "xaieval/filters.hpp"
#include "xaieval/parallel.hpp"
#include "xaieval/rng.hpp"

namespace xai {

void PhantomConfig::validate() const {
  if (width < 8 || height < 8) throw ConfigError("phantom must be at least 8x8");
  if (lesion_radius < 1) throw ConfigError("lesion_radius must be >= 1");
  if (!(dose > 0.0)) throw ConfigError("dose must be positive");
  if (!(lesion_contrast > 0.0)) throw ConfigError("lesion_contrast must be positive");
  if (background_gain < 0.0 || background_blur_sigma < 0.0 || edge_softness < 0.0 || noise_quantum < 0.0) {
    throw ConfigError("background_gain, background_blur_sigma, edge_softness and noise_quantum must be >= 0");
  }
  const int lo = min_center();
  if (height - 1 - lo < lo || width - 1 - lo < lo) {
    throw ConfigError("a radius-" + std::to_string(lesion_radius) + " lesion with a 2-radius margin does not fit " +
                      std::to_string(width) + "x" + std::to_string(height));
  }
}

void to_json(nlohmann::json& j, const PhantomConfig& cfg) {
  j = nlohmann::json{{"width", cfg.width},
                     {"height", cfg.height},
                     {"background_blur_sigma", cfg.background_blur_sigma},
                     {"background_gain", cfg.background_gain},
                     {"lesion_radius", cfg.lesion_radius},
                     {"lesion_contrast", cfg.lesion_contrast},
                     {"edge_softness", cfg.edge_softness},
                     {"dose", cfg.dose},
                     {"seed", cfg.seed},
                     {"noise_quantum", cfg.noise_quantum}};
}

void from_json(const nlohmann::json& j, PhantomConfig& cfg) {
  const PhantomConfig d;
  try {
    cfg.width = j.value("width", d.width);
    cfg.height = j.value("height", d.height);
    cfg.background_blur_sigma = j.value("background_blur_sigma", d.background_blur_sigma);
    cfg.background_gain = j.value("background_gain", d.background_gain);
    cfg.lesion_radius = j.value("lesion_radius", d.lesion_radius);
    cfg.lesion_contrast = j.value("lesion_contrast", d.lesion_contrast);
    cfg.edge_softness = j.value("edge_softness", d.edge_softness);
    cfg.dose = j.value("dose", d.dose);
    cfg.seed = j.value("seed", d.seed);
    cfg.noise_quantum = j.value("noise_quantum", d.noise_quantum);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("phantom config: ") + e.what());
  }
}

double lesion_profile(double distance, double radius, double softness) {
  const double inner = radius - softness / 2.0;
  const double outer = radius + softness / 2.0;
  if (distance <= inner) return 1.0;
  if (distance >= outer) return 0.0;
  return 0.5 * (1.0 + std::cos(std::numbers::pi * (distance - inner) / softness));
}

Image apply_photon_noise(const Image& clean, double dose, double eta, std::uint64_t noise_seed) {
  Rng rng(noise_seed);
  Image out(clean.width, clean.height);
  const double scale = eta / dose;
  for (std::size_t i = 0; i < clean.pixels.size(); ++i) {
    const double v = clean.pixels[i];
    const double z = rng.normal();
    const double noisy = v + z * std::sqrt(std::max(v, 0.0) * scale);
    out.pixels[i] = static_cast<float>(std::max(noisy, 0.0));
  }
  return out;
}

std::string case_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "case-%04d", index);
  return buf;
}

Case generate_case(const PhantomConfig& cfg, bool with_lesion, int case_index) {
  cfg.validate();
  const int w = cfg.width;
  const int h = cfg.height;
  const auto n = static_cast<std::size_t>(w) * h;
  const auto idx = static_cast<std::uint64_t>(case_index);

  // Unit-variance correlated texture around the 0.5 baseline.
  Rng texture_rng(derive_seed(cfg.seed, stream::kTexture, idx));
  std::vector<double> white(n);
  for (double& v : white) v = texture_rng.normal();
  std::vector<double> field = gaussian_blur(w, h, white, cfg.background_blur_sigma);
  double mean = 0.0;
  for (double v : field) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : field) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(n));

  std::vector<double> composite(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double unit = sd > 0.0 ? (field[i] - mean) / sd : 0.0;
    composite[i] = 0.5 + cfg.background_gain * unit;
  }

  Case out;
  out.id = case_id(case_index);
  out.index = case_index;
  out.has_lesion = with_lesion;
  out.provenance = cfg;
  out.noise_seed = derive_seed(cfg.seed, stream::kNoise, idx);

  if (with_lesion) {
    Rng place_rng(derive_seed(cfg.seed, stream::kPlacement, idx));
    const int r = cfg.lesion_radius;
    const int cr = place_rng.uniform_int(cfg.min_center(), h - 1 - cfg.min_center());
    const int cc = place_rng.uniform_int(cfg.min_center(), w - 1 - cfg.min_center());
    GroundTruth truth;
    truth.center_row = cr;
    truth.center_col = cc;
    truth.radius = r;
    truth.box = Roi{std::max(cr - r, 0), std::max(cc - r, 0), std::min(cr + r + 1, h), std::min(cc + r + 1, w)};
    truth.mask.assign(n, 0.0f);
    std::vector<float> context(n, 0.0f);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double d = std::hypot(y - cr, x - cc);
        const double p = lesion_profile(d, r, cfg.edge_softness);
        const auto i = static_cast<std::size_t>(y) * w + x;
        composite[i] += cfg.lesion_contrast * p;
        truth.mask[i] = static_cast<float>(p);
        if (d > r && d <= 2.0 * r) context[i] = 1.0f;
      }
    }
    truth.context = std::move(context);
    out.truth = std::move(truth);
  }

  out.clean = Image(w, h);
  for (std::size_t i = 0; i < n; ++i) out.clean.pixels[i] = static_cast<float>(composite[i]);
  out.image = apply_photon_noise(out.clean, cfg.dose, cfg.noise_quantum, out.noise_seed);
  return out;
}

std::vector<bool> lesion_layout(int n_cases, double lesion_fraction) {
  if (n_cases < 2) throw ConfigError("a dataset needs at least 2 cases");
  if (!(lesion_fraction >= 0.0 && lesion_fraction <= 1.0)) {
    throw ConfigError("lesion fraction must lie in [0,1]");
  }
  const long lesions = std::lround(n_cases * lesion_fraction);
  std::vector<bool> layout(n_cases, false);
  for (int i = 0; i < n_cases; ++i) {
    layout[i] = (static_cast<long>(i + 1) * lesions) / n_cases > (static_cast<long>(i) * lesions) / n_cases;
  }
  return layout;
}

std::vector<Case> generate_dataset(const PhantomConfig& cfg, int n_cases, double lesion_fraction, int jobs) {
  cfg.validate();
  const auto layout = lesion_layout(n_cases, lesion_fraction);
  std::vector<Case> cases(n_cases);
  parallel_for(cases.size(), jobs, [&](std::size_t i, int) {
    cases[i] = generate_case(cfg, layout[i], static_cast<int>(i));
  });
  return cases;
}

}  // namespace xai
