#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "xaieval/core.hpp"

namespace xai {

enum class PerturbKind { Dose, Rotation, Shift };

PerturbKind parse_perturb_kind(const std::string& name);
std::string to_string(PerturbKind kind);

/// One point of a perturbation grid. `value` is the dose factor or the angle
/// in degrees; shifts use (dr, dc).
struct PerturbLevel {
  double value = 0.0;
  int dr = 0;
  int dc = 0;

  friend bool operator==(const PerturbLevel&, const PerturbLevel&) = default;
};

struct PerturbationSpec {
  PerturbKind kind = PerturbKind::Dose;
  std::vector<PerturbLevel> levels;
  std::uint64_t seed = 0;

  void validate() const;
  /// `dose=<f>`, `rot=<deg>` or `shift=<dr>,<dc>`.
  std::string variant(const PerturbLevel& level) const;
  bool is_identity(const PerturbLevel& level) const;
};

/// Levels are numbers; a shift level may also be a [dr, dc] pair (a scalar s means (s, s)).
void to_json(nlohmann::json& j, const PerturbationSpec& spec);
void from_json(const nlohmann::json& j, PerturbationSpec& spec);

/// Default grids: dose {1,0.5,0.25,0.1}, rotation {0,5,10,20,35,50} deg, shift {0,+-2,+-5} px.
std::vector<PerturbationSpec> default_perturbations();

/// Noiseless composite plus the exposure it was observed at.
struct DoseProvenance {
  const Image* clean = nullptr;
  double nominal_dose = 1.0;
  double noise_quantum = 5e-4;
};

struct DoseResult {
  Image image;
  bool fallback = false;  // additive path used (no provenance)
};

/// Observation at dose x factor. With provenance the noiseless composite is
/// re-noised from stream `seed` (passing the case's own noise seed at factor 1
/// reproduces the original bit-exactly). Without it, extra noise of variance
/// v * eta * (1/factor - 1) is added, which only supports factor <= 1.
DoseResult apply_dose(const Image& img, double factor, std::uint64_t seed,
                      const std::optional<DoseProvenance>& provenance, double noise_quantum = 5e-4);

/// Rotates the content counter-clockwise (as displayed, row 0 on top) about
/// the image centre with bilinear sampling. Multiples of 90 degrees are exact
/// index permutations on square grids.
Image rotate(const Image& img, double degrees, float fill = 0.5f);
std::vector<float> rotate_plane(int width, int height, std::span<const float> plane, double degrees, float fill);

/// Position in the original frame whose content lands on (row, col) of the
/// `degrees`-rotated frame.
std::pair<double, double> rotation_source(double row, double col, double degrees, int width, int height);

/// Maps a heatmap computed on a `degrees`-rotated input back to the original
/// frame (rotation by -degrees, fill 0) and renormalizes.
Heatmap reregister_heatmap(const Heatmap& h, double degrees);

/// Integer translation by (dr, dc), vacated pixels = 0.5. ConfigError when
/// |dr| or |dc| reaches a quarter of the image.
Image shift(const Image& img, int dr, int dc);
/// Inverse translation for heatmaps (fill 0) followed by renormalization.
Heatmap unshift_heatmap(const Heatmap& h, int dr, int dc);

}  // namespace xai
