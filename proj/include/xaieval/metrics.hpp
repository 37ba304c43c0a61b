#pragma once

#include <optional>
#include <span>
#include <string>

#include "xaieval/core.hpp"

namespace xai {

double mse(const Heatmap& a, const Heatmap& b);

/// Mean local SSIM over every position where the Gaussian window fits.
double ssim(const Heatmap& a, const Heatmap& b, const MetricParams& p = {});

double iou_box(const Roi& a, const Roi& b);

/// Set IoU; two empty masks agree perfectly (1).
double iou_mask(const Mask& a, const Mask& b);

/// Pearson correlation of mid-ranks. nullopt when either input is constant.
std::optional<double> spearman(std::span<const float> a, std::span<const float> b);
std::optional<double> spearman(const Heatmap& h, std::span<const float> g);

/// Mid-ranks (1-based, ties averaged).
std::vector<double> midranks(std::span<const float> values);

}  // namespace xai
