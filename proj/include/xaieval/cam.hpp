#pragma once

#include <string>
#include <string_view>

#include "xaieval/core.hpp"
#include "xaieval/provider.hpp"
#include "xaieval/refmodel.hpp"

namespace xai {

// `Whitebox` is not a CAM: it asks the provider for its own attribution map
// and exists so the white-box fidelity check can compare a method to itself.
enum class CamMethod { Eigen, Ablation, Whitebox };

CamMethod parse_cam_method(std::string_view name);
std::string to_string(CamMethod method);

/// First principal component of the column-centred (pixels x channels)
/// matrix, projected from the uncentred maps, sign fixed so the projection
/// sums to >= 0, then ReLU and min-max normalization.
Heatmap eigen_cam(const FeatureStack& stack);

/// Channel weights w_k = (y - y_k) / max(|y|, 1e-8) from the provider's
/// ablation rescoring; heatmap = normalized ReLU(sum_k w_k F_k).
Heatmap ablation_cam(Provider& provider, const Image& img, const FeatureStack& stack);

/// Computes features once and dispatches to the requested method.
Heatmap explain(CamMethod method, Provider& provider, const Image& img);

}  // namespace xai
