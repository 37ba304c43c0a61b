#include "xaieval/cam.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "xaieval/errors.hpp"

namespace xai {

CamMethod parse_cam_method(std::string_view name) {
  if (name == "eigen") return CamMethod::Eigen;
  if (name == "ablation") return CamMethod::Ablation;
  if (name == "whitebox") return CamMethod::Whitebox;
  throw ConfigError("unknown explanation method '" + std::string(name) + "'");
}

std::string to_string(CamMethod method) {
  switch (method) {
    case CamMethod::Eigen:
      return "eigen";
    case CamMethod::Ablation:
      return "ablation";
    case CamMethod::Whitebox:
      return "whitebox";
  }
  return "unknown";
}

namespace {

Heatmap relu_normalized(int width, int height, const std::vector<double>& values) {
  std::vector<float> v(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) v[i] = static_cast<float>(std::max(values[i], 0.0));
  return normalize_heatmap(Heatmap(width, height, std::move(v)));
}

}  // namespace

Heatmap eigen_cam(const FeatureStack& stack) {
  if (stack.channels < 1) throw ConfigError("eigen CAM needs at least one channel");
  const auto pixels = static_cast<Eigen::Index>(stack.plane_size());
  const Eigen::Index k = stack.channels;

  Eigen::MatrixXd m(pixels, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto ch = stack.channel(static_cast<int>(c));
    for (Eigen::Index p = 0; p < pixels; ++p) m(p, c) = ch[p];
  }
  const Eigen::RowVectorXd mean = m.colwise().mean();
  const Eigen::MatrixXd centred = m.rowwise() - mean;
  // Right singular vectors of the centred matrix are the eigenvectors of its Gram matrix.
  const Eigen::MatrixXd gram = centred.transpose() * centred;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
  Eigen::VectorXd v1 = solver.eigenvectors().col(k - 1);

  Eigen::VectorXd proj = m * v1;
  if (proj.sum() < 0.0) proj = -proj;
  std::vector<double> values(proj.data(), proj.data() + proj.size());
  return relu_normalized(stack.width, stack.height, values);
}

Heatmap ablation_cam(Provider& provider, const Image& img, const FeatureStack& stack) {
  const double base = provider.predict(img).score;
  const double denom = std::max(std::abs(base), 1e-8);
  std::vector<double> sum(stack.plane_size(), 0.0);
  for (int k = 0; k < stack.channels; ++k) {
    double ablated = 0.0;
    try {
      ablated = provider.ablated_score(img, stack, k);
    } catch (const ProviderError&) {
      throw;
    } catch (const std::exception& e) {
      throw ProviderError(k, e.what());
    }
    const double weight = (base - ablated) / denom;
    if (weight == 0.0) continue;
    const auto ch = stack.channel(k);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += weight * static_cast<double>(ch[i]);
  }
  return relu_normalized(stack.width, stack.height, sum);
}

Heatmap explain(CamMethod method, Provider& provider, const Image& img) {
  switch (method) {
    case CamMethod::Eigen:
      return eigen_cam(provider.features(img));
    case CamMethod::Ablation:
      return ablation_cam(provider, img, provider.features(img));
    case CamMethod::Whitebox:
      return provider.attribution(img);
  }
  throw ConfigError("unknown explanation method");
}

}  // namespace xai
