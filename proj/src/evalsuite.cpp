#include "xaieval/evalsuite.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "xaieval/errors.hpp"
#include "xaieval/metrics.hpp"
#include "xaieval/parallel.hpp"
#include "xaieval/rng.hpp"

namespace xai {

using nlohmann::json;

std::string to_string(Criterion c) {
  switch (c) {
    case Criterion::Consistency:
      return "consistency";
    case Criterion::Plausibility:
      return "plausibility";
    case Criterion::Fidelity:
      return "fidelity";
  }
  return "unknown";
}

Criterion parse_criterion(const std::string& name) {
  if (name == "consistency") return Criterion::Consistency;
  if (name == "plausibility") return Criterion::Plausibility;
  if (name == "fidelity") return Criterion::Fidelity;
  throw SchemaError("unknown criterion '" + name + "'");
}

void to_json(json& j, const AggregateRow& row) {
  j = json{{"variant", row.variant}, {"metric", row.metric}, {"mean", row.mean}, {"std", row.std}, {"n", row.n}};
}

void from_json(const json& j, AggregateRow& row) {
  row.variant = j.at("variant").get<std::string>();
  row.metric = j.at("metric").get<std::string>();
  row.mean = j.at("mean").get<double>();
  row.std = j.at("std").get<double>();
  row.n = j.at("n").get<int>();
}

std::vector<AggregateRow> aggregate(std::span<const MetricRecord> records) {
  std::vector<AggregateRow> rows;
  std::vector<std::vector<double>> values;
  std::map<std::pair<std::string, std::string>, std::size_t> slot;
  for (const auto& r : records) {
    if (!r.value) continue;
    auto [it, inserted] = slot.try_emplace({r.variant, r.metric}, rows.size());
    if (inserted) {
      rows.push_back(AggregateRow{r.variant, r.metric, 0.0, 0.0, 0});
      values.emplace_back();
    }
    values[it->second].push_back(*r.value);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& v = values[i];
    const double n = static_cast<double>(v.size());
    double sum = 0.0;
    for (double x : v) sum += x;
    const double mean = sum / n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    rows[i].mean = mean;
    rows[i].std = std::sqrt(ss / n);
    rows[i].n = static_cast<int>(v.size());
  }
  return rows;
}

const AggregateRow* RunResult::find(const std::string& variant, const std::string& metric) const {
  for (const auto& row : aggregates) {
    if (row.variant == variant && row.metric == metric) return &row;
  }
  return nullptr;
}

void to_json(json& j, const RunResult& r) {
  j = json{{"criterion", to_string(r.criterion)},
           {"check", r.check},
           {"method", r.method},
           {"model_id", r.model_id},
           {"status", r.status},
           {"config", r.config},
           {"aggregates", r.aggregates}};
  if (!r.error.empty()) j["error"] = r.error;
  if (r.pass) j["pass"] = *r.pass;
}

void from_json(const json& j, RunResult& r) {
  try {
    r.criterion = parse_criterion(j.at("criterion").get<std::string>());
    r.check = j.at("check").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.model_id = j.value("model_id", std::string{});
    r.status = j.value("status", std::string{run_status::kOk});
    r.error = j.value("error", std::string{});
    r.pass.reset();
    if (j.contains("pass") && !j["pass"].is_null()) r.pass = j["pass"].get<bool>();
    r.config = j.value("config", json::object());
    r.aggregates = j.at("aggregates").get<std::vector<AggregateRow>>();
    r.records.clear();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("run result: ") + e.what());
  }
}

ProviderPool::ProviderPool(ProviderFactory factory, int jobs) : factory_(std::move(factory)) {
  if (!factory_) throw ConfigError("provider pool needs a factory");
  slots_.resize(static_cast<std::size_t>(std::max(1, jobs)));
}

Provider& ProviderPool::at(int worker) {
  auto& slot = slots_.at(static_cast<std::size_t>(worker));
  if (!slot) slot = factory_();
  return *slot;
}

void require_method(Provider& provider, CamMethod method) {
  const Capabilities caps = provider.capabilities();
  auto need = [&](const char* what) {
    if (!caps.has(what)) {
      throw CapabilityError("method '" + to_string(method) + "' needs the provider capability '" + what + "'");
    }
  };
  need("predict");
  switch (method) {
    case CamMethod::Eigen:
      need("features");
      break;
    case CamMethod::Ablation:
      need("features");
      need("ablate");
      break;
    case CamMethod::Whitebox:
      need("attribution");
      break;
  }
}

namespace {

json metric_params_json(const MetricParams& p) {
  return json{{"ssim_k1", p.ssim_k1},         {"ssim_k2", p.ssim_k2},
              {"ssim_window", p.ssim_window}, {"ssim_sigma", p.ssim_sigma},
              {"dynamic_range", p.dynamic_range}, {"binarize_quantile", p.binarize_quantile}};
}

RunResult new_result(Criterion criterion, std::string check, CamMethod method, Provider& provider,
                     const EvalOptions& opt) {
  RunResult r;
  r.criterion = criterion;
  r.check = std::move(check);
  r.method = to_string(method);
  r.model_id = provider.model_id();
  r.config = json{{"seed", opt.seed}, {"metrics", metric_params_json(opt.metrics)}};
  return r;
}

// Collects per-case records in case order. A model-side fault stops the run
// and keeps whatever cases had completed, flagged invalid.
class CaseRecorder {
 public:
  CaseRecorder(RunResult& result, std::size_t n) : result_(result), per_case_(n), done_(n, 0) {}

  template <class Body>
  void run(ProviderPool& pool, Body&& body) {
    try {
      parallel_for(per_case_.size(), pool.jobs(), [&](std::size_t i, int w) {
        body(i, w, per_case_[i]);
        done_[i] = 1;
      });
    } catch (const Error& e) {
      if (!is_provider_fault(e)) throw;
      result_.status = run_status::kInvalid;
      result_.error = e.what();
    }
  }

  void finish() {
    for (std::size_t i = 0; i < per_case_.size(); ++i) {
      if (!done_[i]) continue;
      for (auto& rec : per_case_[i]) result_.records.push_back(std::move(rec));
    }
    result_.aggregates = aggregate(result_.records);
  }

 private:
  RunResult& result_;
  std::vector<std::vector<MetricRecord>> per_case_;
  std::vector<char> done_;
};

struct Emitter {
  const Case& c;
  const RunResult& r;
  std::vector<MetricRecord>& out;

  void operator()(const std::string& variant, const std::string& metric, std::optional<double> value) const {
    out.push_back(MetricRecord{c.id, r.method, to_string(r.criterion), variant, metric, value});
  }
};

double correct(const Case& c, const Prediction& p) { return p.present == c.has_lesion ? 1.0 : 0.0; }

// 1 when the predicted box, centred on a point already mapped to the original
// frame, overlaps the truth box with IoU >= 0.5.
double localization_hit(const Case& c, const Prediction& p, double row, double col) {
  if (!c.truth || !p.present) return 0.0;
  const int side = 2 * c.truth->radius + 1;
  const int h = std::min(side, c.image.height);
  const int w = std::min(side, c.image.width);
  const int r0 = std::clamp(static_cast<int>(std::lround(row)) - h / 2, 0, c.image.height - h);
  const int c0 = std::clamp(static_cast<int>(std::lround(col)) - w / 2, 0, c.image.width - w);
  return iou_box(Roi{r0, c0, r0 + h, c0 + w}, c.truth->box) >= 0.5 ? 1.0 : 0.0;
}

Image fill_roi(const Image& img, const Roi& roi, float value) {
  Image out = img;
  for (int r = roi.row0; r < roi.row1; ++r) {
    for (int c = roi.col0; c < roi.col1; ++c) out.at(r, c) = value;
  }
  return out;
}

double score_drop(double y, double y_deleted, double baseline) {
  const double denom = y - baseline;
  if (std::abs(denom) < 1e-12) return 0.0;
  return (y - y_deleted) / denom;
}

}  // namespace

RunResult run_consistency(std::span<const Case> cases, CamMethod method, ProviderPool& pool,
                          const PerturbationSpec& spec, const EvalOptions& opt) {
  spec.validate();
  opt.metrics.validate();
  if (cases.empty()) throw EmptyEvaluation("consistency needs at least one case");
  require_method(pool.at(0), method);
  RunResult result = new_result(Criterion::Consistency, to_string(spec.kind), method, pool.at(0), opt);
  result.config["perturbation"] = spec;

  const std::uint64_t perturb_master = spec.seed != 0 ? spec.seed : opt.seed;
  std::atomic<bool> used_fallback{false};
  const double q = opt.metrics.binarize_quantile;

  CaseRecorder rec(result, cases.size());
  rec.run(pool, [&](std::size_t i, int w, std::vector<MetricRecord>& out) {
    Provider& p = pool.at(w);
    const Case& c = cases[i];
    const Emitter emit{c, result, out};
    const Heatmap h0 = explain(method, p, c.image);
    const Prediction pred0 = p.predict(c.image);
    const Mask m0 = binarize_top_quantile(h0, q);

    for (const auto& level : spec.levels) {
      const std::string variant = spec.variant(level);
      Heatmap h1 = h0;
      Prediction pred = pred0;
      double peak_row = pred0.peak_row;
      double peak_col = pred0.peak_col;
      if (!spec.is_identity(level)) {
        Image perturbed;
        switch (spec.kind) {
          case PerturbKind::Dose: {
            std::optional<DoseProvenance> prov;
            if (c.clean.width == c.image.width && c.clean.height == c.image.height && !c.clean.pixels.empty()) {
              prov = DoseProvenance{&c.clean, c.provenance.dose, c.provenance.noise_quantum};
            }
            const std::uint64_t seed =
                prov ? c.noise_seed : derive_seed(perturb_master, stream::kPerturbation, static_cast<std::uint64_t>(c.index));
            auto dr = apply_dose(c.image, level.value, seed, prov, c.provenance.noise_quantum);
            if (dr.fallback) used_fallback = true;
            perturbed = std::move(dr.image);
            break;
          }
          case PerturbKind::Rotation:
            perturbed = rotate(c.image, level.value);
            break;
          case PerturbKind::Shift:
            perturbed = shift(c.image, level.dr, level.dc);
            break;
        }
        const Heatmap raw = explain(method, p, perturbed);
        pred = p.predict(perturbed);
        peak_row = pred.peak_row;
        peak_col = pred.peak_col;
        switch (spec.kind) {
          case PerturbKind::Dose:
            h1 = raw;
            break;
          case PerturbKind::Rotation: {
            h1 = reregister_heatmap(raw, level.value);
            std::tie(peak_row, peak_col) =
                rotation_source(pred.peak_row, pred.peak_col, level.value, c.image.width, c.image.height);
            break;
          }
          case PerturbKind::Shift:
            h1 = unshift_heatmap(raw, level.dr, level.dc);
            peak_row -= level.dr;
            peak_col -= level.dc;
            break;
        }
      }
      emit(variant, "ssim", ssim(h0, h1, opt.metrics));
      emit(variant, "mse", mse(h0, h1));
      emit(variant, "iou_mask", iou_mask(m0, binarize_top_quantile(h1, q)));
      emit(variant, "accuracy", correct(c, pred));
      if (c.has_lesion) emit(variant, "localization", localization_hit(c, pred, peak_row, peak_col));
    }
  });
  rec.finish();
  if (spec.kind == PerturbKind::Dose) result.config["dose_path"] = used_fallback ? "additive" : "provenance";
  return result;
}

RunResult run_plausibility(std::span<const Case> cases, CamMethod method, ProviderPool& pool,
                           const EvalOptions& opt) {
  opt.metrics.validate();
  std::vector<std::size_t> lesion;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (cases[i].has_lesion && cases[i].truth) lesion.push_back(i);
  }
  if (lesion.empty()) throw EmptyEvaluation("plausibility needs lesion cases with ground truth");
  require_method(pool.at(0), method);
  RunResult result = new_result(Criterion::Plausibility, "ground-truth", method, pool.at(0), opt);
  const double q = opt.metrics.binarize_quantile;

  CaseRecorder rec(result, lesion.size());
  rec.run(pool, [&](std::size_t k, int w, std::vector<MetricRecord>& out) {
    Provider& p = pool.at(w);
    const Case& c = cases[lesion[k]];
    const GroundTruth& t = *c.truth;
    const int width = c.image.width;
    const int height = c.image.height;
    const Emitter emit{c, result, out};

    const Heatmap h = explain(method, p, c.image);
    const Prediction pred = p.predict(c.image);
    const Mask hm = binarize_top_quantile(h, q);
    const Mask tm = Mask::from_threshold(width, height, t.mask, 0.5f);

    emit("lesion", "iou_box", iou_box(extract_peak_roi(h, t.box.rows(), t.box.cols()), t.box));
    emit("lesion", "iou_mask", iou_mask(hm, tm));
    emit("lesion", "spearman", spearman(h, t.mask));
    emit("lesion", "accuracy", correct(c, pred));
    emit("lesion", "localization", localization_hit(c, pred, pred.peak_row, pred.peak_col));

    if (t.context) {
      const auto& ctx = *t.context;
      Mask um = tm;
      std::vector<float> soft(t.mask);
      Roi ub = t.box;
      for (int r = 0; r < height; ++r) {
        for (int col = 0; col < width; ++col) {
          const std::size_t idx = static_cast<std::size_t>(r) * width + col;
          soft[idx] = std::max(soft[idx], ctx[idx]);
          if (ctx[idx] >= 0.5f) {
            um.bits[idx] = 1;
            ub.row0 = std::min(ub.row0, r);
            ub.row1 = std::max(ub.row1, r + 1);
            ub.col0 = std::min(ub.col0, col);
            ub.col1 = std::max(ub.col1, col + 1);
          }
        }
      }
      emit("context", "iou_box", iou_box(extract_peak_roi(h, ub.rows(), ub.cols()), ub));
      emit("context", "iou_mask", iou_mask(hm, um));
      emit("context", "spearman", spearman(h, soft));
    }
  });
  rec.finish();
  return result;
}

RunResult run_fidelity_randomization(std::span<const Case> cases, CamMethod method, ProviderPool& pool,
                                     const RandomizationOptions& ro, const EvalOptions& opt) {
  opt.metrics.validate();
  if (cases.empty()) throw EmptyEvaluation("randomization check needs at least one case");
  if (ro.modes.empty()) throw ConfigError("randomization check needs at least one mode");
  if (ro.seeds < 1) throw ConfigError("randomization check needs at least one seed");
  if (!(ro.sigma >= 0.0)) throw ConfigError("randomization sigma must be >= 0");
  require_method(pool.at(0), method);
  if (!pool.at(0).capabilities().has("randomize")) {
    throw CapabilityError("provider '" + pool.at(0).model_id() + "' does not support parameter randomization");
  }
  RunResult result = new_result(Criterion::Fidelity, "randomization", method, pool.at(0), opt);
  json modes = json::array();
  for (auto m : ro.modes) modes.push_back(to_string(m));
  result.config["randomization"] = json{{"modes", modes}, {"sigma", ro.sigma}, {"seeds", ro.seeds}};
  const double q = opt.metrics.binarize_quantile;
  const std::size_t n = cases.size();

  std::vector<Heatmap> h0(n);
  std::vector<Mask> m0(n);
  std::vector<double> acc0(n);
  struct Sums {
    double ssim = 0, mse = 0, iou = 0, acc = 0;
  };
  std::vector<std::vector<Sums>> sums(ro.modes.size(), std::vector<Sums>(n));
  const int workers = std::max(1, std::min<int>(pool.jobs(), static_cast<int>(n)));

  auto finish_records = [&](std::vector<char>& done) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!done[i]) continue;
      const Emitter emit{cases[i], result, result.records};
      emit("original", "accuracy", acc0[i]);
    }
    for (std::size_t m = 0; m < ro.modes.size(); ++m) {
      const std::string variant = to_string(ro.modes[m]);
      for (std::size_t i = 0; i < n; ++i) {
        if (!done[i]) continue;
        const Emitter emit{cases[i], result, result.records};
        const Sums& s = sums[m][i];
        emit(variant, "ssim", s.ssim / ro.seeds);
        emit(variant, "mse", s.mse / ro.seeds);
        emit(variant, "iou_mask", s.iou / ro.seeds);
        emit(variant, "accuracy", s.acc / ro.seeds);
      }
    }
    result.aggregates = aggregate(result.records);
  };

  std::vector<char> done(n, 0);
  try {
    parallel_for(n, pool.jobs(), [&](std::size_t i, int w) {
      Provider& p = pool.at(w);
      h0[i] = explain(method, p, cases[i].image);
      m0[i] = binarize_top_quantile(h0[i], q);
      acc0[i] = correct(cases[i], p.predict(cases[i].image));
    });
    for (std::size_t m = 0; m < ro.modes.size(); ++m) {
      const std::string purpose = std::string(stream::kRandomization) + "/" + to_string(ro.modes[m]);
      for (int s = 0; s < ro.seeds; ++s) {
        const std::uint64_t seed = derive_seed(opt.seed, purpose, static_cast<std::uint64_t>(s));
        std::vector<std::unique_ptr<Provider>> randomized(static_cast<std::size_t>(workers));
        parallel_for(n, pool.jobs(), [&](std::size_t i, int w) {
          auto& rp = randomized[static_cast<std::size_t>(w)];
          if (!rp) rp = pool.at(w).randomized(ro.modes[m], ro.sigma, seed);
          const Heatmap h1 = explain(method, *rp, cases[i].image);
          Sums& acc = sums[m][i];
          acc.ssim += ssim(h0[i], h1, opt.metrics);
          acc.mse += mse(h0[i], h1);
          acc.iou += iou_mask(m0[i], binarize_top_quantile(h1, q));
          acc.acc += correct(cases[i], rp->predict(cases[i].image));
        });
      }
    }
    std::fill(done.begin(), done.end(), 1);
  } catch (const Error& e) {
    if (!is_provider_fault(e)) throw;
    // Per-case sums mix completed and missing seeds after a fault, so no
    // partial records are kept.
    result.status = run_status::kInvalid;
    result.error = e.what();
  }
  finish_records(done);
  return result;
}

RunResult run_fidelity_single_deletion(std::span<const Case> cases, CamMethod method, ProviderPool& pool,
                                       const DeletionOptions& d, const EvalOptions& opt) {
  opt.metrics.validate();
  if (cases.empty()) throw EmptyEvaluation("single deletion needs at least one case");
  if (d.roi_size < 1) throw ConfigError("deletion ROI size must be positive");
  require_method(pool.at(0), method);
  RunResult result = new_result(Criterion::Fidelity, "single-deletion", method, pool.at(0), opt);
  result.config["deletion"] = json{{"roi_size", d.roi_size}, {"fill", 0.5}};

  CaseRecorder rec(result, cases.size());
  rec.run(pool, [&](std::size_t i, int w, std::vector<MetricRecord>& out) {
    Provider& p = pool.at(w);
    const Case& c = cases[i];
    const Emitter emit{c, result, out};
    const int bh = std::min(d.roi_size, c.image.height);
    const int bw = std::min(d.roi_size, c.image.width);
    const double baseline = p.baseline_score(c.image.width, c.image.height);

    const Heatmap h = explain(method, p, c.image);
    const Prediction pred = p.predict(c.image);

    const Image deleted = fill_roi(c.image, extract_peak_roi(h, bh, bw), 0.5f);
    const Prediction pd = p.predict(deleted);
    const Heatmap hd = explain(method, p, deleted);
    emit("peak", "score_drop", score_drop(pred.score, pd.score, baseline));
    emit("peak", "prediction_changed", pd.present != pred.present ? 1.0 : 0.0);
    emit("peak", "ssim", ssim(h, hd, opt.metrics));

    Rng rng(derive_seed(opt.seed, stream::kDeletion, static_cast<std::uint64_t>(c.index)));
    const int r0 = rng.uniform_int(0, c.image.height - bh);
    const int c0 = rng.uniform_int(0, c.image.width - bw);
    const Prediction pr = p.predict(fill_roi(c.image, Roi{r0, c0, r0 + bh, c0 + bw}, 0.5f));
    emit("random", "score_drop", score_drop(pred.score, pr.score, baseline));
    emit("random", "prediction_changed", pr.present != pred.present ? 1.0 : 0.0);
  });
  rec.finish();
  return result;
}

namespace {

struct DeletionCurve {
  std::vector<double> ratio;  // (s_t - b) / (s_0 - b) for t = 1..steps
  double area = 1.0;
  int steps_present = 0;  // leading steps at which the model still reports the lesion
};

DeletionCurve deletion_curve(Provider& p, const Image& img, const std::vector<int>& order, int patch, int steps,
                             double baseline, const Prediction& first) {
  const int tiles_x = img.width / patch;
  DeletionCurve curve;
  curve.ratio.resize(static_cast<std::size_t>(steps), 1.0);
  const double denom = first.score - baseline;
  const bool degenerate = std::abs(denom) < 1e-12;
  Image work = img;
  bool still_present = first.present;
  double sum = 0.0;
  for (int t = 0; t < steps; ++t) {
    const int tile = order[static_cast<std::size_t>(t)];
    const int r0 = (tile / tiles_x) * patch;
    const int c0 = (tile % tiles_x) * patch;
    for (int r = r0; r < r0 + patch; ++r) {
      for (int c = c0; c < c0 + patch; ++c) work.at(r, c) = 0.5f;
    }
    const Prediction pt = p.predict(work);
    const double ratio = degenerate ? 1.0 : (pt.score - baseline) / denom;
    curve.ratio[static_cast<std::size_t>(t)] = ratio;
    sum += ratio;
    still_present = still_present && pt.present;
    if (still_present) ++curve.steps_present;
  }
  curve.area = sum / steps;
  return curve;
}

std::string step_metric(int t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ratio@%03d", t);
  return buf;
}

}  // namespace

RunResult run_fidelity_incremental_deletion(std::span<const Case> cases, CamMethod method, ProviderPool& pool,
                                            const DeletionOptions& d, const EvalOptions& opt) {
  opt.metrics.validate();
  if (cases.empty()) throw EmptyEvaluation("incremental deletion needs at least one case");
  if (d.patch < 1 || d.steps < 1 || d.random_orders < 1) {
    throw ConfigError("incremental deletion needs patch, steps and random_orders >= 1");
  }
  for (const auto& o : d.orders) {
    if (o != "importance" && o != "reverse" && o != "random") throw ConfigError("unknown deletion order '" + o + "'");
  }
  require_method(pool.at(0), method);
  RunResult result = new_result(Criterion::Fidelity, "incremental-deletion", method, pool.at(0), opt);
  result.config["deletion"] = json{{"patch", d.patch},
                                   {"steps", d.steps},
                                   {"random_orders", d.random_orders},
                                   {"orders", d.orders},
                                   {"fill", 0.5}};

  CaseRecorder rec(result, cases.size());
  rec.run(pool, [&](std::size_t i, int w, std::vector<MetricRecord>& out) {
    Provider& p = pool.at(w);
    const Case& c = cases[i];
    const Emitter emit{c, result, out};
    const int tiles_x = c.image.width / d.patch;
    const int tiles_y = c.image.height / d.patch;
    const int tiles = tiles_x * tiles_y;
    if (static_cast<long>(d.steps) * d.patch * d.patch >= static_cast<long>(c.image.width) * c.image.height ||
        d.steps > tiles) {
      throw ConfigError("incremental deletion: steps x patch^2 must stay below the image area");
    }
    const double baseline = p.baseline_score(c.image.width, c.image.height);
    const Heatmap h = explain(method, p, c.image);
    const Prediction first = p.predict(c.image);

    std::vector<double> tile_mean(static_cast<std::size_t>(tiles), 0.0);
    for (int t = 0; t < tiles; ++t) {
      const int r0 = (t / tiles_x) * d.patch;
      const int c0 = (t % tiles_x) * d.patch;
      double s = 0.0;
      for (int r = r0; r < r0 + d.patch; ++r) {
        for (int col = c0; col < c0 + d.patch; ++col) s += h.at(r, col);
      }
      tile_mean[static_cast<std::size_t>(t)] = s / (d.patch * d.patch);
    }
    std::vector<int> ascending(static_cast<std::size_t>(tiles));
    std::iota(ascending.begin(), ascending.end(), 0);
    std::ranges::stable_sort(ascending, [&](int a, int b) { return tile_mean[a] < tile_mean[b]; });
    std::vector<int> descending(static_cast<std::size_t>(tiles));
    std::iota(descending.begin(), descending.end(), 0);
    std::ranges::stable_sort(descending, [&](int a, int b) { return tile_mean[a] > tile_mean[b]; });

    auto emit_curve = [&](const std::string& variant, const std::vector<DeletionCurve>& curves) {
      const double k = static_cast<double>(curves.size());
      double area = 0.0;
      double present = 0.0;
      for (const auto& cv : curves) {
        area += cv.area;
        present += cv.steps_present;
      }
      emit(variant, "area", area / k);
      emit(variant, "steps_present", present / k);
      for (int t = 0; t < d.steps; ++t) {
        double r = 0.0;
        for (const auto& cv : curves) r += cv.ratio[static_cast<std::size_t>(t)];
        emit(variant, step_metric(t + 1), r / k);
      }
    };

    for (const auto& order : d.orders) {
      if (order == "importance") {
        emit_curve(order, {deletion_curve(p, c.image, descending, d.patch, d.steps, baseline, first)});
      } else if (order == "reverse") {
        emit_curve(order, {deletion_curve(p, c.image, ascending, d.patch, d.steps, baseline, first)});
      } else {
        std::vector<DeletionCurve> curves;
        for (int k = 0; k < d.random_orders; ++k) {
          Rng rng(derive_seed(opt.seed, std::string(stream::kDeletion) + "/order",
                              static_cast<std::uint64_t>(c.index) * 1000003ULL + static_cast<std::uint64_t>(k)));
          std::vector<int> perm(static_cast<std::size_t>(tiles));
          std::iota(perm.begin(), perm.end(), 0);
          for (int a = tiles - 1; a > 0; --a) std::swap(perm[a], perm[rng.uniform_int(0, a)]);
          curves.push_back(deletion_curve(p, c.image, perm, d.patch, d.steps, baseline, first));
        }
        emit_curve(order, curves);
      }
    }
  });
  rec.finish();
  return result;
}

RunResult run_fidelity_whitebox(std::span<const Case> cases, CamMethod method, ProviderPool& pool,
                                const EvalOptions& opt) {
  opt.metrics.validate();
  if (cases.empty()) throw EmptyEvaluation("white-box check needs at least one case");
  require_method(pool.at(0), method);
  if (!pool.at(0).capabilities().has("attribution")) {
    throw CapabilityError("provider '" + pool.at(0).model_id() + "' exposes no attribution oracle");
  }
  RunResult result = new_result(Criterion::Fidelity, "whitebox", method, pool.at(0), opt);
  const double q = opt.metrics.binarize_quantile;

  CaseRecorder rec(result, cases.size());
  rec.run(pool, [&](std::size_t i, int w, std::vector<MetricRecord>& out) {
    Provider& p = pool.at(w);
    const Case& c = cases[i];
    const Emitter emit{c, result, out};
    const Heatmap h = explain(method, p, c.image);
    const Heatmap ref = p.attribution(c.image);
    emit("whitebox", "ssim", ssim(h, ref, opt.metrics));
    emit("whitebox", "mse", mse(h, ref));
    emit("whitebox", "iou_mask", iou_mask(binarize_top_quantile(h, q), binarize_top_quantile(ref, q)));
    emit("whitebox", "spearman", spearman(h, ref.values));
  });
  rec.finish();
  return result;
}

void GateConfig::validate() const {
  auto in = [](const std::optional<double>& v, double lo, double hi, const char* name) {
    if (v && !(*v >= lo && *v <= hi)) {
      throw ConfigError(std::string("gate ") + name + " outside [" + format_value(lo) + ", " + format_value(hi) + "]");
    }
  };
  // The ranges admit slightly unsatisfiable values on purpose (e.g. SSIM 1.01)
  // so that a gate can be used to stop a pipeline deliberately.
  in(min_mean_ssim, -1.0, 2.0, "min_mean_ssim");
  in(max_mean_mse, 0.0, 1e300, "max_mean_mse");
  in(min_mean_iou, 0.0, 2.0, "min_mean_iou");
  in(min_fidelity_separation, -2.0, 2.0, "min_fidelity_separation");
}

void to_json(json& j, const GateConfig& g) {
  j = json::object();
  if (g.min_mean_ssim) j["min_mean_ssim"] = *g.min_mean_ssim;
  if (g.max_mean_mse) j["max_mean_mse"] = *g.max_mean_mse;
  if (g.min_mean_iou) j["min_mean_iou"] = *g.min_mean_iou;
  if (g.min_fidelity_separation) j["min_fidelity_separation"] = *g.min_fidelity_separation;
}

void from_json(const json& j, GateConfig& g) {
  if (!j.is_object()) throw ConfigError("gates must be a JSON object");
  g = GateConfig{};
  for (const auto& [key, value] : j.items()) {
    if (value.is_null()) continue;
    if (!value.is_number()) throw ConfigError("gate '" + key + "' must be a number");
    const double v = value.get<double>();
    if (key == "min_mean_ssim") {
      g.min_mean_ssim = v;
    } else if (key == "max_mean_mse") {
      g.max_mean_mse = v;
    } else if (key == "min_mean_iou") {
      g.min_mean_iou = v;
    } else if (key == "min_fidelity_separation") {
      g.min_fidelity_separation = v;
    } else {
      throw ConfigError("unknown gate '" + key + "'");
    }
  }
  g.validate();
}

std::optional<bool> consistency_gate(const RunResult& r, const GateConfig& g) {
  if (!g.min_mean_ssim && !g.max_mean_mse) return std::nullopt;
  if (!r.valid()) return false;
  bool ok = true;
  bool seen = false;
  for (const auto& row : r.aggregates) {
    if (row.metric == "ssim" && g.min_mean_ssim) {
      seen = true;
      ok = ok && row.mean >= *g.min_mean_ssim;
    }
    if (row.metric == "mse" && g.max_mean_mse) {
      seen = true;
      ok = ok && row.mean <= *g.max_mean_mse;
    }
  }
  return ok && seen;
}

std::optional<bool> plausibility_gate(const RunResult& r, const GateConfig& g) {
  if (!g.min_mean_iou) return std::nullopt;
  if (!r.valid()) return false;
  const AggregateRow* row = r.find("lesion", "iou_box");
  return row != nullptr && row->mean >= *g.min_mean_iou;
}

std::optional<double> fidelity_separation(const RunResult& single_deletion) {
  const AggregateRow* peak = single_deletion.find("peak", "score_drop");
  const AggregateRow* random = single_deletion.find("random", "score_drop");
  if (peak == nullptr || random == nullptr) return std::nullopt;
  return peak->mean - random->mean;
}

std::optional<bool> fidelity_gate(const RunResult& single_deletion, const GateConfig& g) {
  if (!g.min_fidelity_separation) return std::nullopt;
  if (!single_deletion.valid()) return false;
  const auto sep = fidelity_separation(single_deletion);
  return sep && *sep >= *g.min_fidelity_separation;
}

namespace {

RunResult not_supported(Criterion criterion, std::string check, CamMethod method, Provider& provider,
                        const EvalOptions& opt, const std::string& why) {
  RunResult r = new_result(criterion, std::move(check), method, provider, opt);
  r.status = run_status::kNotSupported;
  r.error = why;
  return r;
}

void validate_pipeline(const PipelineConfig& cfg) {
  cfg.gates.validate();
  cfg.eval.metrics.validate();
  if (cfg.methods.empty()) throw ConfigError("no explanation methods configured");
  for (const auto& spec : cfg.perturbations) spec.validate();
  const auto& f = cfg.fidelity;
  if (cfg.gates.min_fidelity_separation && !f.single_deletion) {
    throw ConfigError("min_fidelity_separation needs the single-deletion check enabled");
  }
  if (f.randomization) {
    if (f.randomization_options.modes.empty() || f.randomization_options.seeds < 1 ||
        !(f.randomization_options.sigma >= 0.0)) {
      throw ConfigError("randomization check needs modes, seeds >= 1 and sigma >= 0");
    }
  }
  if (f.deletion.roi_size < 1 || f.deletion.patch < 1 || f.deletion.steps < 1 || f.deletion.random_orders < 1) {
    throw ConfigError("deletion options must be positive");
  }
}

}  // namespace

PipelineResult run_pipeline(std::span<const Case> cases, ProviderPool& pool, const PipelineConfig& cfg) {
  validate_pipeline(cfg);
  if (cases.empty()) throw EmptyEvaluation("pipeline needs at least one case");
  for (CamMethod m : cfg.methods) require_method(pool.at(0), m);

  PipelineResult out;
  const EvalOptions& opt = cfg.eval;
  for (CamMethod method : cfg.methods) {
    auto stop = [&](const RunResult& r) {
      if (r.status == run_status::kInvalid) {
        out.provider_failed = true;
        return true;
      }
      if (r.pass && !*r.pass) {
        out.gate_failed = true;
        return true;
      }
      return false;
    };

    bool halted = false;
    for (const auto& spec : cfg.consistency ? cfg.perturbations : std::vector<PerturbationSpec>{}) {
      RunResult r = run_consistency(cases, method, pool, spec, opt);
      r.pass = consistency_gate(r, cfg.gates);
      halted = stop(r) || halted;
      out.runs.push_back(std::move(r));
      if (out.provider_failed) break;
    }
    if (halted) continue;

    if (cfg.plausibility) {
      RunResult r = run_plausibility(cases, method, pool, opt);
      r.pass = plausibility_gate(r, cfg.gates);
      halted = stop(r);
      out.runs.push_back(std::move(r));
    }
    if (halted || !cfg.fidelity_stage) continue;

    const std::size_t first_fidelity = out.runs.size();
    std::optional<bool> verdict;
    const auto& f = cfg.fidelity;
    if (f.randomization) {
      try {
        out.runs.push_back(run_fidelity_randomization(cases, method, pool, f.randomization_options, opt));
      } catch (const CapabilityError& e) {
        out.runs.push_back(not_supported(Criterion::Fidelity, "randomization", method, pool.at(0), opt, e.what()));
      }
    }
    if (f.single_deletion) {
      RunResult r = run_fidelity_single_deletion(cases, method, pool, f.deletion, opt);
      verdict = fidelity_gate(r, cfg.gates);
      if (const auto sep = fidelity_separation(r)) r.config["separation"] = *sep;
      out.runs.push_back(std::move(r));
    }
    if (f.incremental_deletion) {
      out.runs.push_back(run_fidelity_incremental_deletion(cases, method, pool, f.deletion, opt));
    }
    if (f.whitebox) {
      try {
        out.runs.push_back(run_fidelity_whitebox(cases, method, pool, opt));
      } catch (const CapabilityError& e) {
        out.runs.push_back(not_supported(Criterion::Fidelity, "whitebox", method, pool.at(0), opt, e.what()));
      }
    }
    for (std::size_t i = first_fidelity; i < out.runs.size(); ++i) {
      if (verdict) out.runs[i].pass = *verdict;
      if (out.runs[i].status == run_status::kInvalid) out.provider_failed = true;
    }
    if (verdict && !*verdict) out.gate_failed = true;
  }
  return out;
}

std::string csv_header() { return "case_id,method,criterion,variant,metric,value"; }

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

}  // namespace

std::string records_csv(std::span<const RunResult> runs) {
  std::string out = csv_header() + "\n";
  for (const auto& r : runs) {
    for (const auto& rec : r.records) {
      out += csv_field(rec.case_id) + ',' + csv_field(rec.method) + ',' + csv_field(rec.criterion) + ',' +
             csv_field(rec.variant) + ',' + csv_field(rec.metric) + ',' + (rec.value ? format_value(*rec.value) : "") +
             '\n';
    }
  }
  return out;
}

}  // namespace xai
