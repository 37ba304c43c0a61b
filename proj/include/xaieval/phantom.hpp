#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "xaieval/core.hpp"

namespace xai {

/// Parameters of the synthetic mammography-like phantom.
struct PhantomConfig {
  int width = 128;
  int height = 128;
  double background_blur_sigma = 8.0;
  double background_gain = 0.09;
  int lesion_radius = 5;
  double lesion_contrast = 0.25;
  double edge_softness = 1.5;
  double dose = 1.0;
  std::uint64_t seed = 0;
  double noise_quantum = 5e-4;  // eta: photon-noise variance per unit intensity at dose 1

  /// Throws ConfigError when the lesion (plus a 2-radius margin) cannot fit or a parameter is out of range.
  void validate() const;
  /// Inclusive range of admissible lesion centres along one axis of length n.
  int min_center() const { return 2 * lesion_radius; }

  friend bool operator==(const PhantomConfig&, const PhantomConfig&) = default;
};

void to_json(nlohmann::json& j, const PhantomConfig& cfg);
void from_json(const nlohmann::json& j, PhantomConfig& cfg);

struct Case {
  std::string id;
  int index = 0;
  Image image;  // noisy observation
  Image clean;  // noiseless composite, kept for dose re-noising
  bool has_lesion = false;
  std::optional<GroundTruth> truth;
  std::uint64_t noise_seed = 0;
  PhantomConfig provenance;
};

/// Raised-cosine radial profile: 1 inside radius - softness/2, 0 beyond radius + softness/2.
double lesion_profile(double distance, double radius, double softness);

/// clean + N(0, clean * eta / dose) per pixel, clipped at 0. Draws one normal
/// per pixel in row-major order from the stream seeded by `noise_seed`.
Image apply_photon_noise(const Image& clean, double dose, double eta, std::uint64_t noise_seed);

std::string case_id(int index);

Case generate_case(const PhantomConfig& cfg, bool with_lesion, int case_index);

/// Which of n cases carry a lesion: exactly round(n * fraction), spread evenly.
std::vector<bool> lesion_layout(int n_cases, double lesion_fraction);

std::vector<Case> generate_dataset(const PhantomConfig& cfg, int n_cases, double lesion_fraction,
                                   int jobs = 1);

}  // namespace xai
