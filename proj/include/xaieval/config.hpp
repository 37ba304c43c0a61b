#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "xaieval/adapter.hpp"
#include "xaieval/evalsuite.hpp"

namespace xai {

/// Everything a run needs. Paths in a config file are resolved against the
/// file's own directory.
struct RunConfig {
  std::filesystem::path dataset;
  std::filesystem::path output;
  std::vector<CamMethod> methods{CamMethod::Eigen, CamMethod::Ablation};
  ProviderSpec provider;
  std::vector<PerturbationSpec> perturbations = default_perturbations();
  GateConfig gates;
  FidelityChecks fidelity;
  MetricParams metrics;
  std::uint64_t seed = 0;

  void validate() const;
  PipelineConfig pipeline() const;
};

/// Strict parse: unknown keys are a ConfigError.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& file);

/// Normalized echo with every default spelled out. The output directory is
/// left out so that runs differing only in where they write stay identical.
nlohmann::json config_echo(const RunConfig& cfg);

/// Master seed and the derived per-purpose stream seeds, as recorded in run.json.
nlohmann::json seed_table(std::uint64_t master);

}  // namespace xai
