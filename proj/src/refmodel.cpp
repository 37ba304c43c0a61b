#include "xaieval/refmodel.hpp"

#include <algorithm>
#include <cmath>

#include "xaieval/errors.hpp"
#include "xaieval/parallel.hpp"
#include "xaieval/rng.hpp"

namespace xai {

// Frozen output of calibrate_threshold(PhantomConfig{}, RefModel{}); the
// refmodel tests recompute it.
const double kDefaultThreshold = 1.1961484625935555;

namespace {

constexpr int kEdgeSize = 31;

Kernel transpose(const Kernel& k) {
  Kernel t{k.cols, k.rows, std::vector<double>(k.weights.size())};
  for (int r = 0; r < k.rows; ++r) {
    for (int c = 0; c < k.cols; ++c) t.weights[static_cast<std::size_t>(c) * t.cols + r] = k.at(r, c);
  }
  return t;
}

}  // namespace

void normalize_kernel(Kernel& k) {
  double mean = 0.0;
  for (double v : k.weights) mean += v;
  mean /= static_cast<double>(k.weights.size());
  double norm = 0.0;
  for (double& v : k.weights) {
    v -= mean;
    norm += v * v;
  }
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (double& v : k.weights) v /= norm;
  }
}

Kernel disk_kernel(int radius) {
  const int half = static_cast<int>(std::ceil(1.5 * radius));
  const int size = 2 * half + 1;
  Kernel k{size, size, std::vector<double>(static_cast<std::size_t>(size) * size, 0.0)};
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      if (std::hypot(r - half, c - half) <= radius) k.weights[static_cast<std::size_t>(r) * size + c] = 1.0;
    }
  }
  normalize_kernel(k);
  return k;
}

// Rows above the centre -1, below +1: responds to intensity rising downwards.
Kernel horizontal_edge_kernel() {
  const int size = kEdgeSize;
  Kernel k{size, size, std::vector<double>(static_cast<std::size_t>(size) * size, 0.0)};
  for (int r = 0; r < size; ++r) {
    const double v = r < size / 2 ? -1.0 : (r > size / 2 ? 1.0 : 0.0);
    for (int c = 0; c < size; ++c) k.weights[static_cast<std::size_t>(r) * size + c] = v;
  }
  normalize_kernel(k);
  return k;
}

Kernel laplacian_kernel() {
  Kernel k{3, 3, {-1, -1, -1, -1, 8, -1, -1, -1, -1}};
  normalize_kernel(k);
  return k;
}

FilterBank default_filter_bank() {
  FilterBank bank;
  bank.id = "refbank-v1";
  for (int radius : {3, 5, 7, 9}) {
    bank.names.push_back("disk" + std::to_string(radius));
    bank.kernels.push_back(disk_kernel(radius));
  }
  bank.names.push_back("edge-h");
  bank.kernels.push_back(horizontal_edge_kernel());
  bank.names.push_back("edge-v");
  bank.kernels.push_back(transpose(horizontal_edge_kernel()));
  bank.names.push_back("laplacian");
  bank.kernels.push_back(laplacian_kernel());
  return bank;
}

HeadWeights default_head() {
  return HeadWeights{{0.2, 1.0, 0.5, 0.2, 0.0, 0.0, 0.0}, 0.0, kDefaultThreshold};
}

void to_json(nlohmann::json& j, const HeadWeights& h) {
  j = nlohmann::json{{"w", h.w}, {"bias", h.bias}, {"threshold", h.threshold}};
}

void from_json(const nlohmann::json& j, HeadWeights& h) {
  try {
    h.w = j.at("w").get<std::vector<double>>();
    h.bias = j.value("bias", 0.0);
    h.threshold = j.at("threshold").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("head weights: ") + e.what());
  }
}

void to_json(nlohmann::json& j, const Calibration& c) {
  j = nlohmann::json{{"threshold", c.threshold},
                     {"background_p95", c.background_p95},
                     {"lesion_p05", c.lesion_p05},
                     {"cases", c.cases}};
}

void from_json(const nlohmann::json& j, Calibration& c) {
  try {
    c.threshold = j.at("threshold").get<double>();
    c.background_p95 = j.at("background_p95").get<double>();
    c.lesion_p05 = j.at("lesion_p05").get<double>();
    c.cases = j.at("cases").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("calibration: ") + e.what());
  }
}

FeatureStack ablate_channel(const FeatureStack& stack, int k) {
  if (k < 0 || k >= stack.channels) {
    throw BadChannel("channel " + std::to_string(k) + " outside [0," + std::to_string(stack.channels) + ")");
  }
  FeatureStack out = stack;
  std::ranges::fill(out.channel(k), 0.0f);
  return out;
}

RandomizationMode parse_randomization_mode(const std::string& name) {
  if (name == "head-noise") return RandomizationMode::HeadNoise;
  if (name == "head-reinit") return RandomizationMode::HeadReinit;
  if (name == "kernel-noise") return RandomizationMode::KernelNoise;
  throw CapabilityError("unsupported randomization mode '" + name + "'");
}

std::string to_string(RandomizationMode mode) {
  switch (mode) {
    case RandomizationMode::HeadNoise:
      return "head-noise";
    case RandomizationMode::HeadReinit:
      return "head-reinit";
    case RandomizationMode::KernelNoise:
      return "kernel-noise";
  }
  return "unknown";
}

RefModel::RefModel() : RefModel(default_filter_bank(), default_head(), 5) {}

RefModel::RefModel(FilterBank bank, HeadWeights head, int lesion_radius)
    : bank_(std::move(bank)), head_(std::move(head)), lesion_radius_(lesion_radius) {
  if (static_cast<int>(head_.w.size()) != bank_.size()) {
    throw ConfigError("head has " + std::to_string(head_.w.size()) + " weights for " +
                      std::to_string(bank_.size()) + " channels");
  }
}

FeatureStack RefModel::feature_maps(const Image& img) const { return compute_features(img, false); }

FeatureStack RefModel::compute_features(const Image& img, bool weighted_only) const {
  int largest = kLocalMeanWindow;
  for (const auto& k : bank_.kernels) largest = std::max({largest, k.rows, k.cols});
  if (img.width < 8 || img.height < 8 || img.width * 2 < largest || img.height * 2 < largest) {
    throw InputTooSmall("image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                        " is too small for a " + std::to_string(largest) + "-pixel kernel");
  }
  const int w = img.width;
  const int h = img.height;
  const std::vector<double> plane(img.pixels.begin(), img.pixels.end());
  const std::vector<double> local = box_mean(w, h, plane, kLocalMeanWindow);
  std::vector<double> centred(plane.size());
  for (std::size_t i = 0; i < plane.size(); ++i) centred[i] = plane[i] - local[i];

  FeatureStack stack{w, h, bank_.size(), std::vector<float>(plane.size() * bank_.size())};
  for (int k = 0; k < bank_.size(); ++k) {
    if (weighted_only && head_.w[k] == 0.0) continue;
    const std::vector<double> resp = correlate(w, h, centred, bank_.kernels[k]);
    auto out = stack.channel(k);
    for (std::size_t i = 0; i < resp.size(); ++i) out[i] = static_cast<float>(std::max(resp[i], 0.0));
  }
  return stack;
}

std::vector<double> RefModel::decision_map(const FeatureStack& stack) const {
  if (stack.channels != bank_.size()) throw ShapeError("feature stack channel count does not match the head");
  std::vector<double> d(stack.plane_size(), 0.0);
  for (int k = 0; k < stack.channels; ++k) {
    const double wk = head_.w[k];
    if (wk == 0.0) continue;
    const auto ch = stack.channel(k);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += wk * static_cast<double>(ch[i]);
  }
  return d;
}

double RefModel::score_from(const FeatureStack& stack) const {
  const auto d = decision_map(stack);
  return *std::ranges::max_element(d) + head_.bias;
}

Prediction RefModel::predict_from(const FeatureStack& stack) const {
  const auto d = decision_map(stack);
  std::size_t best = 0;
  for (std::size_t i = 1; i < d.size(); ++i) {
    if (d[i] > d[best]) best = i;
  }
  Prediction p;
  p.score = d[best] + head_.bias;
  p.present = p.score >= head_.threshold;
  p.peak_row = static_cast<int>(best / stack.width);
  p.peak_col = static_cast<int>(best % stack.width);
  if (p.present) {
    const int side = 2 * lesion_radius_ + 1;
    const int bh = std::min(side, stack.height);
    const int bw = std::min(side, stack.width);
    const int r0 = std::clamp(p.peak_row - bh / 2, 0, stack.height - bh);
    const int c0 = std::clamp(p.peak_col - bw / 2, 0, stack.width - bw);
    p.box = Roi{r0, c0, r0 + bh, c0 + bw};
  }
  return p;
}

// Zero-weight channels cannot change the decision map, so they are left at 0.
Prediction RefModel::predict(const Image& img) const { return predict_from(compute_features(img, true)); }

Heatmap RefModel::whitebox_from(const FeatureStack& stack) const {
  const auto d = decision_map(stack);
  std::vector<float> v(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) v[i] = static_cast<float>(std::max(d[i], 0.0));
  return normalize_heatmap(Heatmap(stack.width, stack.height, std::move(v)));
}

Heatmap RefModel::whitebox_attribution(const Image& img) const { return whitebox_from(compute_features(img, true)); }

RefModel RefModel::randomized(RandomizationMode mode, double sigma, std::uint64_t seed) const {
  auto [head, bank] = randomize_weights(head_, bank_, mode, sigma, seed);
  return RefModel(std::move(bank), std::move(head), lesion_radius_);
}

std::pair<HeadWeights, FilterBank> randomize_weights(const HeadWeights& head, const FilterBank& bank,
                                                     RandomizationMode mode, double sigma,
                                                     std::uint64_t seed) {
  if (sigma < 0.0) throw ConfigError("randomization sigma must be >= 0");
  Rng rng(seed);
  HeadWeights h = head;
  FilterBank b = bank;
  switch (mode) {
    case RandomizationMode::HeadNoise:
      for (double& w : h.w) w += sigma * rng.normal();
      break;
    case RandomizationMode::HeadReinit:
      // The bias is a parameter of the head like any weight and is redrawn too.
      for (double& w : h.w) w = sigma * rng.normal();
      h.bias = sigma * rng.normal();
      break;
    case RandomizationMode::KernelNoise:
      if (sigma == 0.0) break;
      for (auto& k : b.kernels) {
        for (double& v : k.weights) v += sigma * rng.normal();
        normalize_kernel(k);
      }
      b.id += "+kernel-noise";
      break;
  }
  return {std::move(h), std::move(b)};
}

Calibration calibrate_threshold(const PhantomConfig& cfg, const RefModel& model, int n_cases, int jobs) {
  PhantomConfig calib = cfg;
  calib.seed = derive_seed(cfg.seed, stream::kCalibration);
  const auto layout = lesion_layout(n_cases, 0.5);
  std::vector<double> scores(n_cases);
  parallel_for(scores.size(), jobs, [&](std::size_t i, int) {
    const Case c = generate_case(calib, layout[i], static_cast<int>(i));
    scores[i] = model.predict(c.image).score;
  });
  std::vector<float> background;
  std::vector<float> lesion;
  for (int i = 0; i < n_cases; ++i) (layout[i] ? lesion : background).push_back(static_cast<float>(scores[i]));
  std::ranges::sort(background);
  std::ranges::sort(lesion);
  Calibration out;
  out.cases = n_cases;
  out.background_p95 = sorted_quantile(background, 0.95);
  out.lesion_p05 = sorted_quantile(lesion, 0.05);
  out.threshold = 0.5 * (out.background_p95 + out.lesion_p05);
  return out;
}

}  // namespace xai
