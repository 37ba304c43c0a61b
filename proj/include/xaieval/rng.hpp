#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace xai {

// Named random substreams. Every random draw in the library comes from an
// Rng seeded by derive_seed(master, purpose, index), so results never depend
// on scheduling or on how many other streams were consumed.
namespace stream {
inline constexpr std::string_view kGeneration = "generation";
inline constexpr std::string_view kTexture = "texture";
inline constexpr std::string_view kPlacement = "placement";
inline constexpr std::string_view kNoise = "noise";
inline constexpr std::string_view kCalibration = "calibration";
inline constexpr std::string_view kPerturbation = "perturbation";
inline constexpr std::string_view kRandomization = "randomization";
inline constexpr std::string_view kDeletion = "deletion";
}  // namespace stream

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose, std::uint64_t index = 0);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace xai
