#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "xaieval/core.hpp"
#include "xaieval/filters.hpp"
#include "xaieval/phantom.hpp"

namespace xai {

/// Fixed correlation kernels of the reference detector. Channels 0-3 are
/// zero-mean disk matched filters (radii 3, 5, 7, 9); channels 4-6 are
/// distractors (horizontal edge, vertical edge, Laplacian texture). Every
/// kernel is zero-mean with unit L2 norm.
struct FilterBank {
  std::string id;
  std::vector<std::string> names;
  std::vector<Kernel> kernels;

  int size() const { return static_cast<int>(kernels.size()); }
};

inline constexpr int kSignalChannels = 4;
inline constexpr int kChannels = 7;

FilterBank default_filter_bank();
Kernel disk_kernel(int radius);
Kernel horizontal_edge_kernel();
Kernel laplacian_kernel();
/// Shifts the kernel to zero mean and scales it to unit L2 norm.
void normalize_kernel(Kernel& k);

/// Linear read-out over the channel maps.
struct HeadWeights {
  std::vector<double> w;
  double bias = 0.0;
  double threshold = 0.0;

  friend bool operator==(const HeadWeights&, const HeadWeights&) = default;
};

/// Threshold produced by calibrate_threshold() for the default phantom and head.
extern const double kDefaultThreshold;

HeadWeights default_head();
void to_json(nlohmann::json& j, const HeadWeights& h);
void from_json(const nlohmann::json& j, HeadWeights& h);

/// K same-size, non-negative channel maps stored channel-major.
struct FeatureStack {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  std::size_t plane_size() const { return static_cast<std::size_t>(width) * height; }
  std::span<const float> channel(int k) const { return {data.data() + k * plane_size(), plane_size()}; }
  std::span<float> channel(int k) { return {data.data() + k * plane_size(), plane_size()}; }

  friend bool operator==(const FeatureStack&, const FeatureStack&) = default;
};

/// Copy of the stack with channel k zeroed; BadChannel when k is out of range.
FeatureStack ablate_channel(const FeatureStack& stack, int k);

struct Prediction {
  double score = 0.0;
  bool present = false;
  std::optional<Roi> box;
  int peak_row = 0;
  int peak_col = 0;
};

enum class RandomizationMode { HeadNoise, HeadReinit, KernelNoise };
RandomizationMode parse_randomization_mode(const std::string& name);
std::string to_string(RandomizationMode mode);

/// Transparent detector: features = ReLU(kernel * (img - boxcar15(img))),
/// score = max_p sum_k w_k F_k(p) + bias, present = score >= threshold.
class RefModel {
 public:
  RefModel();
  RefModel(FilterBank bank, HeadWeights head, int lesion_radius = 5);

  const FilterBank& bank() const { return bank_; }
  const HeadWeights& head() const { return head_; }
  int lesion_radius() const { return lesion_radius_; }
  std::string model_id() const { return bank_.id; }

  FeatureStack feature_maps(const Image& img) const;
  /// sum_k w_k F_k(p), without the bias.
  std::vector<double> decision_map(const FeatureStack& stack) const;
  Prediction predict(const Image& img) const;
  Prediction predict_from(const FeatureStack& stack) const;
  double score_from(const FeatureStack& stack) const;
  /// Normalized max(0, sum_k w_k F_k): the model's exact evidence map.
  Heatmap whitebox_attribution(const Image& img) const;
  Heatmap whitebox_from(const FeatureStack& stack) const;

  RefModel randomized(RandomizationMode mode, double sigma, std::uint64_t seed) const;

 private:
  FeatureStack compute_features(const Image& img, bool weighted_only) const;

  FilterBank bank_;
  HeadWeights head_;
  int lesion_radius_ = 5;
};

inline constexpr int kLocalMeanWindow = 15;

std::pair<HeadWeights, FilterBank> randomize_weights(const HeadWeights& head, const FilterBank& bank,
                                                     RandomizationMode mode, double sigma,
                                                     std::uint64_t seed);

struct Calibration {
  double threshold = 0.0;
  double background_p95 = 0.0;
  double lesion_p05 = 0.0;
  int cases = 0;
};

void to_json(nlohmann::json& j, const Calibration& c);
void from_json(const nlohmann::json& j, Calibration& c);

/// Midpoint between the 95th percentile of background-only scores and the 5th
/// percentile of lesion scores over a seeded calibration set.
Calibration calibrate_threshold(const PhantomConfig& cfg, const RefModel& model, int n_cases = 200,
                                int jobs = 1);

}  // namespace xai
