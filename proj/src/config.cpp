#include "xaieval/config.hpp"

#include <set>

#include "xaieval/errors.hpp"
#include "xaieval/io.hpp"
#include "xaieval/rng.hpp"

namespace xai {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

json metrics_json(const MetricParams& p) {
  return json{{"ssim_k1", p.ssim_k1},         {"ssim_k2", p.ssim_k2},
              {"ssim_window", p.ssim_window}, {"ssim_sigma", p.ssim_sigma},
              {"dynamic_range", p.dynamic_range}, {"binarize_quantile", p.binarize_quantile}};
}

MetricParams parse_metrics(const json& j) {
  reject_unknown(j, {"ssim_k1", "ssim_k2", "ssim_window", "ssim_sigma", "dynamic_range", "binarize_quantile"},
                 "metrics");
  MetricParams p;
  p.ssim_k1 = j.value("ssim_k1", p.ssim_k1);
  p.ssim_k2 = j.value("ssim_k2", p.ssim_k2);
  p.ssim_window = j.value("ssim_window", p.ssim_window);
  p.ssim_sigma = j.value("ssim_sigma", p.ssim_sigma);
  p.dynamic_range = j.value("dynamic_range", p.dynamic_range);
  p.binarize_quantile = j.value("binarize_quantile", p.binarize_quantile);
  p.validate();
  return p;
}

json fidelity_json(const FidelityChecks& f) {
  json checks = json::array();
  if (f.randomization) checks.push_back("randomization");
  if (f.single_deletion) checks.push_back("single-deletion");
  if (f.incremental_deletion) checks.push_back("incremental-deletion");
  if (f.whitebox) checks.push_back("whitebox");
  json modes = json::array();
  for (auto m : f.randomization_options.modes) modes.push_back(to_string(m));
  const auto& d = f.deletion;
  return json{{"checks", checks},
              {"randomization",
               {{"modes", modes}, {"sigma", f.randomization_options.sigma}, {"seeds", f.randomization_options.seeds}}},
              {"deletion",
               {{"roi_size", d.roi_size},
                {"patch", d.patch},
                {"steps", d.steps},
                {"random_orders", d.random_orders},
                {"orders", d.orders}}}};
}

FidelityChecks parse_fidelity(const json& j) {
  reject_unknown(j, {"checks", "randomization", "deletion"}, "fidelity");
  FidelityChecks f;
  if (j.contains("checks")) {
    f.randomization = f.single_deletion = f.incremental_deletion = f.whitebox = false;
    for (const auto& c : j["checks"]) {
      const auto name = c.get<std::string>();
      if (name == "randomization") {
        f.randomization = true;
      } else if (name == "single-deletion") {
        f.single_deletion = true;
      } else if (name == "incremental-deletion") {
        f.incremental_deletion = true;
      } else if (name == "whitebox") {
        f.whitebox = true;
      } else {
        throw ConfigError("unknown fidelity check '" + name + "'");
      }
    }
  }
  if (j.contains("randomization")) {
    const auto& r = j["randomization"];
    reject_unknown(r, {"modes", "sigma", "seeds"}, "fidelity.randomization");
    auto& ro = f.randomization_options;
    if (r.contains("modes")) {
      ro.modes.clear();
      for (const auto& m : r["modes"]) {
        try {
          ro.modes.push_back(parse_randomization_mode(m.get<std::string>()));
        } catch (const CapabilityError& e) {
          throw ConfigError(e.what());
        }
      }
    }
    ro.sigma = r.value("sigma", ro.sigma);
    ro.seeds = r.value("seeds", ro.seeds);
  }
  if (j.contains("deletion")) {
    const auto& dj = j["deletion"];
    reject_unknown(dj, {"roi_size", "patch", "steps", "random_orders", "orders"}, "fidelity.deletion");
    auto& d = f.deletion;
    d.roi_size = dj.value("roi_size", d.roi_size);
    d.patch = dj.value("patch", d.patch);
    d.steps = dj.value("steps", d.steps);
    d.random_orders = dj.value("random_orders", d.random_orders);
    if (dj.contains("orders")) d.orders = dj["orders"].get<std::vector<std::string>>();
  }
  return f;
}

}  // namespace

void RunConfig::validate() const {
  if (dataset.empty()) throw ConfigError("run config needs a dataset directory");
  provider.validate();
  if (methods.empty()) throw ConfigError("run config needs at least one method");
  for (const auto& p : perturbations) p.validate();
  gates.validate();
  metrics.validate();
  if (gates.min_fidelity_separation && !fidelity.single_deletion) {
    throw ConfigError("min_fidelity_separation needs the single-deletion check");
  }
  for (const auto& o : fidelity.deletion.orders) {
    if (o != "importance" && o != "reverse" && o != "random") throw ConfigError("unknown deletion order '" + o + "'");
  }
  const auto& d = fidelity.deletion;
  if (d.roi_size < 1 || d.patch < 1 || d.steps < 1 || d.random_orders < 1) {
    throw ConfigError("deletion roi_size, patch, steps and random_orders must be positive");
  }
  const auto& r = fidelity.randomization_options;
  if (r.seeds < 1 || !(r.sigma >= 0.0) || r.modes.empty()) {
    throw ConfigError("randomization needs at least one mode and seed and a non-negative sigma");
  }
}

PipelineConfig RunConfig::pipeline() const {
  PipelineConfig p;
  p.methods = methods;
  p.perturbations = perturbations;
  p.gates = gates;
  p.fidelity = fidelity;
  p.eval.metrics = metrics;
  p.eval.seed = seed;
  return p;
}

RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  RunConfig cfg;
  try {
    reject_unknown(j, {"dataset", "output", "methods", "provider", "perturbations", "gates", "fidelity", "metrics",
                       "seed"},
                   "run config");
    if (j.contains("dataset")) cfg.dataset = resolve(j["dataset"].get<std::string>(), base_dir);
    if (j.contains("output")) cfg.output = resolve(j["output"].get<std::string>(), base_dir);
    if (j.contains("methods")) {
      cfg.methods.clear();
      for (const auto& m : j["methods"]) cfg.methods.push_back(parse_cam_method(m.get<std::string>()));
    }
    if (j.contains("provider")) cfg.provider = j["provider"].get<ProviderSpec>();
    if (j.contains("perturbations")) cfg.perturbations = j["perturbations"].get<std::vector<PerturbationSpec>>();
    if (j.contains("gates")) cfg.gates = j["gates"].get<GateConfig>();
    if (j.contains("fidelity")) cfg.fidelity = parse_fidelity(j["fidelity"]);
    if (j.contains("metrics")) cfg.metrics = parse_metrics(j["metrics"]);
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const fs::path& file) {
  json j;
  try {
    j = json::parse(io::read_text(file));
  } catch (const json::parse_error& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  return parse_run_config(j, file.parent_path());
}

json config_echo(const RunConfig& cfg) {
  json methods = json::array();
  for (auto m : cfg.methods) methods.push_back(to_string(m));
  return json{{"dataset", cfg.dataset.string()},
              {"methods", methods},
              {"provider", cfg.provider},
              {"perturbations", cfg.perturbations},
              {"gates", cfg.gates},
              {"fidelity", fidelity_json(cfg.fidelity)},
              {"metrics", metrics_json(cfg.metrics)},
              {"seed", cfg.seed}};
}

json seed_table(std::uint64_t master) {
  json j = {{"master", master}};
  for (auto name : {stream::kGeneration, stream::kPerturbation, stream::kRandomization, stream::kDeletion,
                    stream::kCalibration}) {
    j[std::string(name)] = derive_seed(master, name);
  }
  return j;
}

}  // namespace xai
