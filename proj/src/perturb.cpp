#include "xaieval/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "xaieval/errors.hpp"
#include "xaieval/phantom.hpp"
#include "xaieval/rng.hpp"

namespace xai {

PerturbKind parse_perturb_kind(const std::string& name) {
  if (name == "dose") return PerturbKind::Dose;
  if (name == "rotation") return PerturbKind::Rotation;
  if (name == "shift") return PerturbKind::Shift;
  throw ConfigError("unknown perturbation kind '" + name + "'");
}

std::string to_string(PerturbKind kind) {
  switch (kind) {
    case PerturbKind::Dose:
      return "dose";
    case PerturbKind::Rotation:
      return "rotation";
    case PerturbKind::Shift:
      return "shift";
  }
  return "unknown";
}

namespace {

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

void PerturbationSpec::validate() const {
  if (levels.empty()) throw ConfigError(to_string(kind) + " perturbation has no levels");
  for (const auto& l : levels) {
    if (kind == PerturbKind::Dose && !(l.value > 0.0)) throw ConfigError("dose factors must be positive");
    if (kind == PerturbKind::Rotation && !(std::abs(l.value) <= 180.0)) {
      throw ConfigError("rotation angles must lie in [-180, 180]");
    }
  }
}

std::string PerturbationSpec::variant(const PerturbLevel& level) const {
  switch (kind) {
    case PerturbKind::Dose:
      return "dose=" + format_number(level.value);
    case PerturbKind::Rotation:
      return "rot=" + format_number(level.value);
    case PerturbKind::Shift:
      return "shift=" + std::to_string(level.dr) + "," + std::to_string(level.dc);
  }
  return {};
}

bool PerturbationSpec::is_identity(const PerturbLevel& level) const {
  switch (kind) {
    case PerturbKind::Dose:
      return level.value == 1.0;
    case PerturbKind::Rotation:
      return level.value == 0.0;
    case PerturbKind::Shift:
      return level.dr == 0 && level.dc == 0;
  }
  return false;
}

void to_json(nlohmann::json& j, const PerturbationSpec& spec) {
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& l : spec.levels) {
    if (spec.kind == PerturbKind::Shift) {
      levels.push_back({l.dr, l.dc});
    } else {
      levels.push_back(l.value);
    }
  }
  j = nlohmann::json{{"kind", to_string(spec.kind)}, {"levels", levels}};
}

void from_json(const nlohmann::json& j, PerturbationSpec& spec) {
  try {
    spec.kind = parse_perturb_kind(j.at("kind").get<std::string>());
    spec.levels.clear();
    for (const auto& l : j.at("levels")) {
      PerturbLevel level;
      if (spec.kind == PerturbKind::Shift) {
        if (l.is_array()) {
          level.dr = l.at(0).get<int>();
          level.dc = l.at(1).get<int>();
        } else {
          level.dr = level.dc = l.get<int>();
        }
      } else {
        level.value = l.get<double>();
      }
      spec.levels.push_back(level);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("perturbation spec: ") + e.what());
  }
  spec.validate();
}

std::vector<PerturbationSpec> default_perturbations() {
  PerturbationSpec dose{PerturbKind::Dose, {{1.0}, {0.5}, {0.25}, {0.1}}, 0};
  PerturbationSpec rot{PerturbKind::Rotation, {{0}, {5}, {10}, {20}, {35}, {50}}, 0};
  PerturbationSpec sh{PerturbKind::Shift, {}, 0};
  for (int s : {0, 2, -2, 5, -5}) sh.levels.push_back({0.0, s, s});
  return {dose, rot, sh};
}

DoseResult apply_dose(const Image& img, double factor, std::uint64_t seed,
                      const std::optional<DoseProvenance>& provenance, double noise_quantum) {
  if (!(factor > 0.0)) throw ConfigError("dose factor must be positive");
  if (provenance && provenance->clean != nullptr) {
    return {apply_photon_noise(*provenance->clean, provenance->nominal_dose * factor, provenance->noise_quantum, seed),
            false};
  }
  if (factor > 1.0) {
    throw ConfigError("raising the dose needs the noiseless composite; none is available for this image");
  }
  DoseResult out{img, true};
  if (factor == 1.0) return out;
  Rng rng(seed);
  const double extra = noise_quantum * (1.0 / factor - 1.0);
  for (auto& px : out.image.pixels) {
    const double v = px;
    const double z = rng.normal();
    px = static_cast<float>(std::max(v + z * std::sqrt(std::max(v, 0.0) * extra), 0.0));
  }
  return out;
}

namespace {

// cos/sin of the angle, exact for quarter turns.
std::pair<double, double> cos_sin(double degrees) {
  const double turns = degrees / 90.0;
  if (turns == std::round(turns)) {
    static constexpr int kCos[4] = {1, 0, -1, 0};
    static constexpr int kSin[4] = {0, 1, 0, -1};
    const int q = ((static_cast<int>(std::round(turns)) % 4) + 4) % 4;
    return {kCos[q], kSin[q]};
  }
  const double rad = degrees * std::numbers::pi / 180.0;
  return {std::cos(rad), std::sin(rad)};
}

}  // namespace

std::pair<double, double> rotation_source(double row, double col, double degrees, int width, int height) {
  const auto [cs, sn] = cos_sin(degrees);
  const double cy = (height - 1) / 2.0;
  const double cx = (width - 1) / 2.0;
  const double x = col - cx;
  const double y = row - cy;
  return {sn * x + cs * y + cy, cs * x - sn * y + cx};
}

std::vector<float> rotate_plane(int width, int height, std::span<const float> plane, double degrees, float fill) {
  if (degrees == 0.0) return {plane.begin(), plane.end()};
  const auto [cs, sn] = cos_sin(degrees);
  const double cy = (height - 1) / 2.0;
  const double cx = (width - 1) / 2.0;
  constexpr double kEps = 1e-9;
  std::vector<float> out(plane.size(), fill);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const double x = c - cx;
      const double y = r - cy;
      // Inverse map of a counter-clockwise (on screen) rotation.
      double sx = cs * x - sn * y + cx;
      double sy = sn * x + cs * y + cy;
      if (sx < -kEps || sy < -kEps || sx > width - 1 + kEps || sy > height - 1 + kEps) continue;
      sx = std::clamp(sx, 0.0, static_cast<double>(width - 1));
      sy = std::clamp(sy, 0.0, static_cast<double>(height - 1));
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const int x1 = std::min(x0 + 1, width - 1);
      const int y1 = std::min(y0 + 1, height - 1);
      const double fx = sx - x0;
      const double fy = sy - y0;
      auto px = [&](int yy, int xx) { return static_cast<double>(plane[static_cast<std::size_t>(yy) * width + xx]); };
      double v = px(y0, x0);
      if (fx != 0.0 || fy != 0.0) {
        v = (1.0 - fy) * ((1.0 - fx) * px(y0, x0) + fx * px(y0, x1)) + fy * ((1.0 - fx) * px(y1, x0) + fx * px(y1, x1));
      }
      out[static_cast<std::size_t>(r) * width + c] = static_cast<float>(v);
    }
  }
  return out;
}

Image rotate(const Image& img, double degrees, float fill) {
  if (!(std::abs(degrees) <= 180.0)) throw ConfigError("rotation angle must lie in [-180, 180]");
  return Image(img.width, img.height, rotate_plane(img.width, img.height, img.pixels, degrees, fill));
}

Heatmap reregister_heatmap(const Heatmap& h, double degrees) {
  if (degrees == 0.0) return normalize_heatmap(h);
  return normalize_heatmap(Heatmap(h.width, h.height, rotate_plane(h.width, h.height, h.values, -degrees, 0.0f)));
}

namespace {

std::vector<float> translate(int width, int height, std::span<const float> plane, int dr, int dc, float fill) {
  std::vector<float> out(plane.size(), fill);
  for (int r = 0; r < height; ++r) {
    const int sr = r - dr;
    if (sr < 0 || sr >= height) continue;
    for (int c = 0; c < width; ++c) {
      const int sc = c - dc;
      if (sc < 0 || sc >= width) continue;
      out[static_cast<std::size_t>(r) * width + c] = plane[static_cast<std::size_t>(sr) * width + sc];
    }
  }
  return out;
}

}  // namespace

Image shift(const Image& img, int dr, int dc) {
  if (std::abs(dr) * 4 >= img.height || std::abs(dc) * 4 >= img.width) {
    throw ConfigError("shift (" + std::to_string(dr) + "," + std::to_string(dc) + ") exceeds a quarter of the image");
  }
  return Image(img.width, img.height, translate(img.width, img.height, img.pixels, dr, dc, 0.5f));
}

Heatmap unshift_heatmap(const Heatmap& h, int dr, int dc) {
  if (dr == 0 && dc == 0) return normalize_heatmap(h);
  return normalize_heatmap(Heatmap(h.width, h.height, translate(h.width, h.height, h.values, -dr, -dc, 0.0f)));
}

}  // namespace xai
