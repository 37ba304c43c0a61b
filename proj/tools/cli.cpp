#include "cli.hpp"

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "xaieval/adapter.hpp"
#include "xaieval/cam.hpp"
#include "xaieval/config.hpp"
#include "xaieval/dataset.hpp"
#include "xaieval/errors.hpp"
#include "xaieval/evalsuite.hpp"
#include "xaieval/io.hpp"
#include "xaieval/parallel.hpp"
#include "xaieval/scorecard.hpp"
#include "xaieval/version.hpp"

namespace xai::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kRunSchema = "xaieval-run/1";

struct GenFlags {
  std::string out;
  int n = 150;
  double lesion_frac = 0.5;
  PhantomConfig phantom;
  bool no_calibrate = false;
  bool force = false;
};

// Flags shared by explain and the evaluation subcommands.
struct EvalFlags {
  std::string config;
  std::string dataset;
  std::string out;
  std::string methods;
  std::string adapter;
  double adapter_timeout = 10.0;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* timeout_opt = nullptr;
  std::string cases;  // explain only
};

struct ScorecardFlags {
  std::string run;
  std::string desc;
  std::string out;
  std::string method;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<CamMethod> parse_methods(const std::string& s) {
  std::vector<CamMethod> out;
  for (const auto& name : split_list(s)) out.push_back(parse_cam_method(name));
  if (out.empty()) throw ConfigError("--methods needs at least one method");
  return out;
}

bool is_within(const fs::path& child, const fs::path& parent) {
  const fs::path c = fs::weakly_canonical(child);
  const fs::path p = fs::weakly_canonical(parent);
  auto ci = c.begin();
  for (auto pi = p.begin(); pi != p.end(); ++pi, ++ci) {
    if (pi->empty()) continue;
    if (ci == c.end() || *ci != *pi) return false;
  }
  return true;
}

// The output directory must never be the input dataset or live inside it.
void check_output(const fs::path& out, const fs::path& dataset) {
  if (out.empty()) throw ConfigError("an output directory is required (--out or \"output\" in the config)");
  if (is_within(out, dataset)) throw ConfigError("output directory " + out.string() + " lies inside the dataset");
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

RunConfig resolve_config(const EvalFlags& f) {
  RunConfig cfg = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  if (!f.dataset.empty()) cfg.dataset = f.dataset;
  if (!f.out.empty()) cfg.output = f.out;
  if (!f.methods.empty()) cfg.methods = parse_methods(f.methods);
  if (f.seed_opt && f.seed_opt->count() > 0) cfg.seed = f.seed;
  if (!f.adapter.empty()) {
    cfg.provider = ProviderSpec{};
    cfg.provider.kind = ProviderSpec::Kind::External;
    cfg.provider.command = f.adapter;
  }
  if (f.timeout_opt && f.timeout_opt->count() > 0) cfg.provider.timeout_seconds = f.adapter_timeout;
  cfg.validate();
  return cfg;
}

json dataset_info(const RunConfig& cfg, const Dataset& ds) {
  json j = {{"path", cfg.dataset.generic_string()},
            {"n_cases", ds.n_cases},
            {"lesion_cases", ds.lesion_count()},
            {"phantom", ds.config}};
  j["calibration"] = ds.calibration ? json(*ds.calibration) : json(nullptr);
  return j;
}

int run_gen(const GenFlags& f, int jobs) {
  if (f.out.empty()) throw ConfigError("gen needs --out");
  if (f.n < 1) throw ConfigError("--n must be at least 1");
  if (!(f.lesion_frac >= 0.0 && f.lesion_frac <= 1.0)) throw ConfigError("--lesion-frac must lie in [0, 1]");
  f.phantom.validate();
  const fs::path out = f.out;
  if (fs::exists(out) && !fs::is_empty(out) && !f.force) {
    throw ConfigError(out.string() + " exists and is not empty (use --force to overwrite)");
  }
  const Dataset ds = make_dataset(f.phantom, f.n, f.lesion_frac, !f.no_calibrate, jobs);
  write_dataset(out, ds);
  std::cout << "wrote " << ds.n_cases << " cases (" << ds.lesion_count() << " with lesion) to " << out.string()
            << "\n";
  if (ds.calibration) std::cout << "calibrated threshold " << ds.calibration->threshold << "\n";
  return kExitOk;
}

int run_explain(const EvalFlags& f, int jobs) {
  RunConfig cfg = resolve_config(f);
  check_output(cfg.output, cfg.dataset);
  const Dataset ds = read_dataset(cfg.dataset);

  std::vector<const Case*> selected;
  if (f.cases.empty()) {
    for (const auto& c : ds.cases) selected.push_back(&c);
  } else {
    for (const auto& id : split_list(f.cases)) {
      const Case* found = nullptr;
      for (const auto& c : ds.cases) {
        if (c.id == id) found = &c;
      }
      if (!found) throw ConfigError("no case '" + id + "' in " + cfg.dataset.string());
      selected.push_back(found);
    }
  }

  ProviderPool pool(make_provider_factory(cfg.provider, ds.head, ds.config.lesion_radius), jobs);
  for (CamMethod m : cfg.methods) require_method(pool.at(0), m);

  const std::size_t n = selected.size();
  std::vector<Prediction> predictions(n);
  std::vector<std::vector<Heatmap>> maps(n);
  parallel_for(n, pool.jobs(), [&](std::size_t i, int worker) {
    Provider& p = pool.at(worker);
    predictions[i] = p.predict(selected[i]->image);
    for (CamMethod m : cfg.methods) maps[i].push_back(explain(m, p, selected[i]->image));
  });

  make_dir(cfg.output);
  json preds = json::object();
  for (std::size_t i = 0; i < n; ++i) {
    const Case& c = *selected[i];
    for (std::size_t k = 0; k < cfg.methods.size(); ++k) {
      io::write_heatmap(cfg.output / (c.id + "-" + to_string(cfg.methods[k]) + ".f32"), maps[i][k]);
    }
    const Prediction& p = predictions[i];
    json box = nullptr;
    if (p.box) box = json::array({p.box->row0, p.box->col0, p.box->row1, p.box->col1});
    preds[c.id] = {{"score", p.score}, {"present", p.present}, {"box", box},
                   {"peak", json::array({p.peak_row, p.peak_col})}};
  }
  io::write_text(cfg.output / "predictions.json", preds.dump(2) + "\n");
  std::cout << "explained " << n << " cases with " << cfg.methods.size() << " method(s) into "
            << cfg.output.string() << "\n";
  return kExitOk;
}

int run_eval(const std::string& command, const EvalFlags& f, int jobs) {
  RunConfig cfg = resolve_config(f);
  check_output(cfg.output, cfg.dataset);
  const Dataset ds = read_dataset(cfg.dataset);

  PipelineConfig pc = cfg.pipeline();
  pc.consistency = command == "pipeline" || command == "consistency";
  pc.plausibility = command == "pipeline" || command == "plausibility";
  pc.fidelity_stage = command == "pipeline" || command == "fidelity";

  ProviderPool pool(make_provider_factory(cfg.provider, ds.head, ds.config.lesion_radius), jobs);
  const PipelineResult result = run_pipeline(ds.cases, pool, pc);

  const json echo = config_echo(cfg);
  make_dir(cfg.output);
  io::write_text(cfg.output / "config.json", echo.dump(2) + "\n");

  std::map<Criterion, std::vector<RunResult>> by_criterion;
  for (const auto& r : result.runs) by_criterion[r.criterion].push_back(r);
  for (const auto& [criterion, runs] : by_criterion) {
    io::write_text(cfg.output / (to_string(criterion) + ".csv"), records_csv(runs));
  }

  std::string status = "ok";
  if (result.provider_failed) {
    status = "provider-failed";
  } else if (result.gate_failed) {
    status = "gate-failed";
  }
  const json run = {{"schema", kRunSchema},
                    {"version", kVersion},
                    {"command", command},
                    {"config", echo},
                    {"seeds", seed_table(cfg.seed)},
                    {"dataset", dataset_info(cfg, ds)},
                    {"runs", result.runs},
                    {"status", status}};
  io::write_text(cfg.output / "run.json", run.dump(2) + "\n");

  for (const auto& r : result.runs) {
    std::cout << to_string(r.criterion) << "/" << r.check << " " << r.method << ": " << r.status;
    if (r.pass) std::cout << (*r.pass ? " pass" : " FAIL");
    std::cout << "\n";
  }
  if (result.provider_failed) {
    for (const auto& r : result.runs) {
      if (!r.error.empty()) std::cerr << "xaieval: " << r.check << " " << r.method << ": " << r.error << "\n";
    }
    return kExitProvider;
  }
  return result.gate_failed ? kExitGate : kExitOk;
}

int run_scorecard(const ScorecardFlags& f) {
  if (f.out.empty()) throw ConfigError("scorecard needs --out");
  const json run = io::read_json(f.run);
  if (run.value("schema", "") != kRunSchema) throw SchemaError(f.run + ": not an xaieval run file");
  const auto desc = io::read_json(f.desc).get<DescriptiveSection>();

  std::vector<std::string> methods;
  std::map<std::string, std::vector<RunResult>> by_method;
  for (const auto& rj : run.at("runs")) {
    RunResult r = rj.get<RunResult>();
    if (!by_method.contains(r.method)) methods.push_back(r.method);
    by_method[r.method].push_back(std::move(r));
  }
  if (!f.method.empty()) {
    if (!by_method.contains(f.method)) throw ConfigError("run file has no results for method '" + f.method + "'");
    methods = {f.method};
  }
  if (methods.empty()) throw EmptyEvaluation(f.run + " holds no runs");

  json provenance = {{"version", run.value("version", "")},
                     {"command", run.value("command", "")},
                     {"config", run.value("config", json::object())},
                     {"seeds", run.value("seeds", json::object())},
                     {"dataset", run.value("dataset", json::object())},
                     {"status", run.value("status", "")}};
  const fs::path out = f.out;
  for (const auto& m : methods) {
    const Scorecard card = build_scorecard(desc, by_method[m], provenance);
    const fs::path dir = methods.size() == 1 ? out : out / m;
    write_scorecard(dir, card);
    std::cout << "wrote scorecard for " << m << " to " << dir.string() << "\n";
  }
  return kExitOk;
}

void add_eval_flags(CLI::App* sub, EvalFlags& f, bool allow_config) {
  if (allow_config) sub->add_option("--config", f.config, "Run-config JSON file")->check(CLI::ExistingFile);
  sub->add_option("--dataset", f.dataset, "Dataset directory written by `gen`");
  sub->add_option("--out", f.out, "Output directory");
  sub->add_option("--methods", f.methods, "Comma-separated methods: eigen, ablation, whitebox");
  f.seed_opt = sub->add_option("--seed", f.seed, "Master seed");
  sub->add_option("--adapter", f.adapter, "Shell command starting an external model adapter");
  f.timeout_opt = sub->add_option("--adapter-timeout", f.adapter_timeout, "Seconds to wait for each adapter reply");
}

int exit_code_for(const Error& e) {
  if (is_provider_fault(e) || e.kind() == "CapabilityError") return kExitProvider;
  return kExitUsage;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Seeded evaluation of saliency-map explanations against consistency, plausibility and fidelity",
               "xaieval"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  app.fallthrough();

  int jobs = default_jobs();
  app.add_option("--jobs", jobs, "Worker threads / adapter processes (default: available cores)")
      ->check(CLI::PositiveNumber);

  GenFlags gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic phantom dataset");
  gen_cmd->add_option("--out", gen.out, "Dataset directory")->required();
  gen_cmd->add_option("--n", gen.n, "Number of cases");
  gen_cmd->add_option("--lesion-frac", gen.lesion_frac, "Fraction of cases with a lesion");
  gen_cmd->add_option("--seed", gen.phantom.seed, "Generation seed");
  gen_cmd->add_option("--width", gen.phantom.width);
  gen_cmd->add_option("--height", gen.phantom.height);
  gen_cmd->add_option("--background-blur", gen.phantom.background_blur_sigma);
  gen_cmd->add_option("--background-gain", gen.phantom.background_gain);
  gen_cmd->add_option("--lesion-radius", gen.phantom.lesion_radius);
  gen_cmd->add_option("--lesion-contrast", gen.phantom.lesion_contrast);
  gen_cmd->add_option("--edge-softness", gen.phantom.edge_softness);
  gen_cmd->add_option("--dose", gen.phantom.dose);
  gen_cmd->add_flag("--no-calibrate", gen.no_calibrate, "Keep the default detection threshold");
  gen_cmd->add_flag("--force", gen.force, "Allow writing into a non-empty directory");

  EvalFlags eval;
  auto* explain_cmd = app.add_subcommand("explain", "Write heatmaps for dataset cases");
  add_eval_flags(explain_cmd, eval, true);
  explain_cmd->add_option("--cases", eval.cases, "Comma-separated case ids (default: all)");

  std::map<std::string, CLI::App*> eval_cmds;
  eval_cmds["consistency"] = app.add_subcommand("consistency", "Heatmap stability under perturbations");
  eval_cmds["plausibility"] = app.add_subcommand("plausibility", "Agreement with lesion ground truth");
  eval_cmds["fidelity"] = app.add_subcommand("fidelity", "Faithfulness to the model");
  eval_cmds["pipeline"] = app.add_subcommand("pipeline", "Gated consistency, plausibility and fidelity");
  for (auto& [name, sub] : eval_cmds) add_eval_flags(sub, eval, true);

  ScorecardFlags sc;
  auto* sc_cmd = app.add_subcommand("scorecard", "Render scorecards from a run.json");
  sc_cmd->add_option("--run", sc.run, "run.json written by an evaluation subcommand")
      ->required()
      ->check(CLI::ExistingFile);
  sc_cmd->add_option("--desc", sc.desc, "Descriptive-section JSON")->required()->check(CLI::ExistingFile);
  sc_cmd->add_option("--out", sc.out, "Output directory")->required();
  sc_cmd->add_option("--method", sc.method, "Restrict to one method");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) return run_gen(gen, jobs);
    if (explain_cmd->parsed()) return run_explain(eval, jobs);
    if (sc_cmd->parsed()) return run_scorecard(sc);
    for (auto& [name, sub] : eval_cmds) {
      if (sub->parsed()) return run_eval(name, eval, jobs);
    }
    std::cerr << "xaieval: no subcommand\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "xaieval: " << e.kind() << ": " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const json::exception& e) {
    std::cerr << "xaieval: malformed JSON: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "xaieval: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "xaieval: internal error: " << e.what() << "\n";
    return kExitProvider;
  }
}

}  // namespace xai::cli
