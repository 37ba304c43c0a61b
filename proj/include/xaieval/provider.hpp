#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <set>
#include <string>

#include "xaieval/core.hpp"
#include "xaieval/refmodel.hpp"

namespace xai {

struct Capabilities {
  int protocol = 1;
  std::set<std::string> supports;

  bool has(const std::string& name) const { return supports.contains(name); }
};

/// A model under explanation: the builtin reference detector or an external
/// adapter process. One Provider instance is never used from two threads at
/// once; parallel evaluation creates one instance per worker.
class Provider {
 public:
  virtual ~Provider() = default;

  virtual Capabilities capabilities() = 0;
  /// Identifier of the model / designated feature stack, echoed into results.
  virtual std::string model_id() = 0;
  virtual Prediction predict(const Image& img) = 0;
  virtual FeatureStack features(const Image& img) = 0;
  /// Score with channel k of the designated feature stack zeroed.
  virtual double ablated_score(const Image& img, const FeatureStack& stack, int channel) = 0;

  /// A provider whose parameters were randomized. CapabilityError by default.
  virtual std::unique_ptr<Provider> randomized(RandomizationMode mode, double sigma, std::uint64_t seed);
  /// The model's own attribution map. CapabilityError by default.
  virtual Heatmap attribution(const Image& img);
  /// Score of a featureless image (flat 0.5 baseline of the given size).
  virtual double baseline_score(int width, int height);
};

using ProviderFactory = std::function<std::unique_ptr<Provider>()>;

class RefModelProvider final : public Provider {
 public:
  RefModelProvider() = default;
  explicit RefModelProvider(RefModel model) : model_(std::move(model)) {}

  const RefModel& model() const { return model_; }

  Capabilities capabilities() override;
  std::string model_id() override { return model_.model_id(); }
  Prediction predict(const Image& img) override { return model_.predict(img); }
  FeatureStack features(const Image& img) override { return model_.feature_maps(img); }
  double ablated_score(const Image& img, const FeatureStack& stack, int channel) override;
  std::unique_ptr<Provider> randomized(RandomizationMode mode, double sigma, std::uint64_t seed) override;
  Heatmap attribution(const Image& img) override { return model_.whitebox_attribution(img); }
  double baseline_score(int, int) override { return model_.head().bias; }

 private:
  RefModel model_;
};

ProviderFactory refmodel_factory(RefModel model);

}  // namespace xai
