#include "xaieval/provider.hpp"

#include "xaieval/errors.hpp"

namespace xai {

std::unique_ptr<Provider> Provider::randomized(RandomizationMode, double, std::uint64_t) {
  throw CapabilityError("provider '" + model_id() + "' does not support parameter randomization");
}

Heatmap Provider::attribution(const Image&) {
  throw CapabilityError("provider '" + model_id() + "' exposes no attribution oracle");
}

double Provider::baseline_score(int width, int height) {
  return predict(Image(width, height, 0.5f)).score;
}

Capabilities RefModelProvider::capabilities() {
  return Capabilities{1, {"predict", "features", "ablate", "randomize", "attribution"}};
}

double RefModelProvider::ablated_score(const Image&, const FeatureStack& stack, int channel) {
  return model_.score_from(ablate_channel(stack, channel));
}

std::unique_ptr<Provider> RefModelProvider::randomized(RandomizationMode mode, double sigma, std::uint64_t seed) {
  return std::make_unique<RefModelProvider>(model_.randomized(mode, sigma, seed));
}

ProviderFactory refmodel_factory(RefModel model) {
  return [model = std::move(model)]() -> std::unique_ptr<Provider> {
    return std::make_unique<RefModelProvider>(model);
  };
}

}  // namespace xai
