#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "xaieval/cam.hpp"
#include "xaieval/core.hpp"
#include "xaieval/perturb.hpp"
#include "xaieval/phantom.hpp"
#include "xaieval/provider.hpp"

namespace xai {

enum class Criterion { Consistency, Plausibility, Fidelity };
std::string to_string(Criterion c);
Criterion parse_criterion(const std::string& name);

/// One CSV row. An absent value (e.g. Spearman on a constant heatmap) is kept
/// as a row with an empty value field and excluded from aggregates.
struct MetricRecord {
  std::string case_id;
  std::string method;
  std::string criterion;
  std::string variant;
  std::string metric;
  std::optional<double> value;

  friend bool operator==(const MetricRecord&, const MetricRecord&) = default;
};

struct AggregateRow {
  std::string variant;
  std::string metric;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  int n = 0;

  friend bool operator==(const AggregateRow&, const AggregateRow&) = default;
};

void to_json(nlohmann::json& j, const AggregateRow& row);
void from_json(const nlohmann::json& j, AggregateRow& row);

/// Groups defined values by (variant, metric) in order of first appearance.
std::vector<AggregateRow> aggregate(std::span<const MetricRecord> records);

namespace run_status {
inline constexpr const char* kOk = "ok";
inline constexpr const char* kInvalid = "invalid";              // provider failed mid-run; records are partial
inline constexpr const char* kNotSupported = "not-supported";  // provider lacks the needed capability
}  // namespace run_status

struct RunResult {
  Criterion criterion = Criterion::Consistency;
  /// Which protocol produced the result: a perturbation kind for consistency,
  /// "ground-truth" for plausibility, and "randomization", "single-deletion",
  /// "incremental-deletion" or "whitebox" for fidelity.
  std::string check;
  std::string method;
  std::string model_id;
  std::string status = run_status::kOk;
  std::string error;
  std::optional<bool> pass;
  nlohmann::json config = nlohmann::json::object();
  std::vector<MetricRecord> records;
  std::vector<AggregateRow> aggregates;

  const AggregateRow* find(const std::string& variant, const std::string& metric) const;
  bool valid() const { return status == run_status::kOk; }
};

/// Summary form (aggregates, no per-case records), as stored in run.json.
void to_json(nlohmann::json& j, const RunResult& r);
void from_json(const nlohmann::json& j, RunResult& r);

/// Hands out one provider per worker thread. Slots are created on first use
/// and each slot is only touched by its own worker.
class ProviderPool {
 public:
  ProviderPool(ProviderFactory factory, int jobs);

  int jobs() const { return static_cast<int>(slots_.size()); }
  Provider& at(int worker);
  const ProviderFactory& factory() const { return factory_; }

 private:
  ProviderFactory factory_;
  std::vector<std::unique_ptr<Provider>> slots_;
};

/// Case-level parallelism is set by the ProviderPool size.
struct EvalOptions {
  MetricParams metrics;
  std::uint64_t seed = 0;  // master seed
};

/// Throws CapabilityError unless the provider can produce heatmaps for `method`.
void require_method(Provider& provider, CamMethod method);

/// Per case and level: heatmap on the original, heatmap on the perturbed input
/// mapped back to the original frame, SSIM/MSE/IoU between the two and model
/// accuracy/localization on the perturbed input. Dose levels re-noise the
/// case's noiseless composite with its own noise stream when available.
RunResult run_consistency(std::span<const Case> cases, CamMethod method, ProviderPool& pool,
                          const PerturbationSpec& spec, const EvalOptions& opt);

/// Lesion cases only. Variant "lesion" scores against the lesion box/mask;
/// variant "context" against the lesion together with its context annulus.
RunResult run_plausibility(std::span<const Case> cases, CamMethod method, ProviderPool& pool,
                           const EvalOptions& opt);

struct RandomizationOptions {
  std::vector<RandomizationMode> modes{RandomizationMode::HeadReinit};
  double sigma = 1.0;
  int seeds = 5;
};

RunResult run_fidelity_randomization(std::span<const Case> cases, CamMethod method, ProviderPool& pool,
                                     const RandomizationOptions& ro, const EvalOptions& opt);

struct DeletionOptions {
  int roi_size = 15;  // side of the single-deletion square; covers a radius-5 lesion with its soft edge
  int patch = 8;      // incremental-deletion tile side
  int steps = 32;
  int random_orders = 5;
  std::vector<std::string> orders{"importance", "reverse", "random"};
};

/// Score drop (y - y') / (y - baseline) after filling the heatmap's peak ROI
/// with 0.5 ("peak"), and the same for a random ROI of equal size ("random").
RunResult run_fidelity_single_deletion(std::span<const Case> cases, CamMethod method, ProviderPool& pool,
                                       const DeletionOptions& d, const EvalOptions& opt);

/// Deletes patch x patch tiles cumulatively in heatmap order and records the
/// normalized area of the score curve: mean over steps of
/// (s_t - baseline) / (s_0 - baseline), 1 when s_0 equals the baseline.
RunResult run_fidelity_incremental_deletion(std::span<const Case> cases, CamMethod method, ProviderPool& pool,
                                            const DeletionOptions& d, const EvalOptions& opt);

/// SSIM, MSE, IoU and Spearman between the method's heatmap and the
/// provider's own attribution map.
RunResult run_fidelity_whitebox(std::span<const Case> cases, CamMethod method, ProviderPool& pool,
                                const EvalOptions& opt);

struct GateConfig {
  std::optional<double> min_mean_ssim;
  std::optional<double> max_mean_mse;
  std::optional<double> min_mean_iou;
  std::optional<double> min_fidelity_separation;

  bool empty() const { return !min_mean_ssim && !max_mean_mse && !min_mean_iou && !min_fidelity_separation; }
  void validate() const;

  friend bool operator==(const GateConfig&, const GateConfig&) = default;
};

void to_json(nlohmann::json& j, const GateConfig& g);
void from_json(const nlohmann::json& j, GateConfig& g);

struct FidelityChecks {
  bool randomization = true;
  bool single_deletion = true;
  bool incremental_deletion = true;
  bool whitebox = true;
  RandomizationOptions randomization_options;
  DeletionOptions deletion;
};

struct PipelineConfig {
  std::vector<CamMethod> methods{CamMethod::Eigen, CamMethod::Ablation};
  std::vector<PerturbationSpec> perturbations = default_perturbations();
  GateConfig gates;
  FidelityChecks fidelity;
  EvalOptions eval;
  // Stages to run. A skipped stage neither produces runs nor halts the chain.
  bool consistency = true;
  bool plausibility = true;
  bool fidelity_stage = true;
};

/// Gate verdicts. Each returns nullopt when the relevant threshold is unset.
std::optional<bool> consistency_gate(const RunResult& r, const GateConfig& g);
std::optional<bool> plausibility_gate(const RunResult& r, const GateConfig& g);
/// Separation = mean peak-ROI score drop minus mean random-ROI score drop.
std::optional<double> fidelity_separation(const RunResult& single_deletion);
std::optional<bool> fidelity_gate(const RunResult& single_deletion, const GateConfig& g);

struct PipelineResult {
  std::vector<RunResult> runs;
  bool gate_failed = false;
  bool provider_failed = false;
};

/// Consistency, then plausibility, then fidelity for each method; a method's
/// chain stops at the first failed gate.
PipelineResult run_pipeline(std::span<const Case> cases, ProviderPool& pool, const PipelineConfig& cfg);

/// CSV with header `case_id,method,criterion,variant,metric,value`; values use %.17g.
std::string records_csv(std::span<const RunResult> runs);
std::string csv_header();
std::string format_value(double v);

}  // namespace xai
