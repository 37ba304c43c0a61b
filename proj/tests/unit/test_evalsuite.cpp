#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "xaieval/errors.hpp"
#include "xaieval/evalsuite.hpp"
#include "xaieval/provider.hpp"

using namespace xai;

namespace {

std::vector<Case> small_cases(int n, std::uint64_t seed, bool noiseless = false, int size = 64) {
  PhantomConfig cfg;
  cfg.width = cfg.height = size;
  cfg.seed = seed;
  auto cases = generate_dataset(cfg, n, 0.5);
  if (noiseless) {
    for (auto& c : cases) c.image = c.clean;
  }
  return cases;
}

ProviderPool builtin_pool(int jobs = 1) { return ProviderPool(refmodel_factory(RefModel()), jobs); }

double mean_of(const RunResult& r, const std::string& variant, const std::string& metric) {
  const AggregateRow* row = r.find(variant, metric);
  REQUIRE(row != nullptr);
  return row->mean;
}

}  // namespace

TEST_SUITE("evalsuite") {
  TEST_CASE("aggregate groups in first-seen order with population std") {
    std::vector<MetricRecord> recs{
        {"a", "eigen", "consistency", "v1", "ssim", 1.0}, {"a", "eigen", "consistency", "v2", "ssim", 0.5},
        {"b", "eigen", "consistency", "v1", "ssim", 0.0}, {"b", "eigen", "consistency", "v1", "mse", std::nullopt},
        {"c", "eigen", "consistency", "v1", "mse", 2.0}};
    const auto rows = aggregate(recs);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].variant == "v1");
    CHECK(rows[0].metric == "ssim");
    CHECK(rows[0].mean == 0.5);
    CHECK(rows[0].std == 0.5);
    CHECK(rows[0].n == 2);
    CHECK(rows[1].variant == "v2");
    CHECK(rows[2].metric == "mse");
    CHECK(rows[2].n == 1);
  }

  TEST_CASE("identity perturbations are perfectly consistent") {
    const auto cases = small_cases(6, 3);
    auto pool = builtin_pool();
    for (CamMethod m : {CamMethod::Eigen, CamMethod::Ablation}) {
      for (auto kind : {PerturbKind::Dose, PerturbKind::Rotation, PerturbKind::Shift}) {
        const PerturbationSpec spec{kind, {PerturbLevel{kind == PerturbKind::Dose ? 1.0 : 0.0, 0, 0}}, 0};
        const RunResult r = run_consistency(cases, m, pool, spec, {});
        const std::string v = spec.variant(spec.levels[0]);
        CHECK(r.valid());
        CHECK(mean_of(r, v, "ssim") == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(mean_of(r, v, "mse") == 0.0);
        CHECK(mean_of(r, v, "iou_mask") == 1.0);
        CHECK(r.find(v, "ssim")->n == 6);
      }
    }
  }

  TEST_CASE("plausibility of the white-box map on clean lesions is exact") {
    const auto cases = small_cases(6, 5, true, 128);
    auto pool = builtin_pool();
    const RunResult r = run_plausibility(cases, CamMethod::Whitebox, pool, {});
    CHECK(mean_of(r, "lesion", "iou_box") == 1.0);
    CHECK(r.find("lesion", "iou_box")->n == 3);
    CHECK(r.find("context", "iou_box") != nullptr);
  }

  TEST_CASE("plausibility needs lesion cases") {
    PhantomConfig cfg;
    cfg.width = cfg.height = 64;
    const auto none = generate_dataset(cfg, 4, 0.0);
    auto pool = builtin_pool();
    CHECK_THROWS_AS(run_plausibility(none, CamMethod::Eigen, pool, {}), EmptyEvaluation);
  }

  TEST_CASE("zero-sigma randomization changes nothing") {
    const auto cases = small_cases(4, 8);
    auto pool = builtin_pool();
    RandomizationOptions ro;
    ro.modes = {RandomizationMode::HeadNoise};
    ro.sigma = 0.0;
    ro.seeds = 2;
    const RunResult r = run_fidelity_randomization(cases, CamMethod::Ablation, pool, ro, {});
    CHECK(mean_of(r, "head-noise", "ssim") == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(mean_of(r, "head-noise", "accuracy") == mean_of(r, "original", "accuracy"));
  }

  TEST_CASE("eigen cam survives head re-initialization unchanged") {
    const auto cases = small_cases(4, 9);
    auto pool = builtin_pool();
    RandomizationOptions ro;
    ro.seeds = 3;
    const RunResult r = run_fidelity_randomization(cases, CamMethod::Eigen, pool, ro, {});
    CHECK(mean_of(r, "head-reinit", "ssim") == 1.0);
    CHECK(mean_of(r, "head-reinit", "mse") == 0.0);
  }

  TEST_CASE("single deletion on background cases barely moves the score") {
    PhantomConfig cfg;
    cfg.seed = 2;
    auto cases = generate_dataset(cfg, 4, 0.0);
    for (auto& c : cases) c.image = Image(c.image.width, c.image.height, 0.5f);
    auto pool = builtin_pool();
    const RunResult r = run_fidelity_single_deletion(cases, CamMethod::Ablation, pool, {}, {});
    CHECK(std::abs(mean_of(r, "peak", "score_drop")) < 1e-9);
  }

  TEST_CASE("incremental deletion of a blank image is flat") {
    PhantomConfig cfg;
    auto cases = generate_dataset(cfg, 2, 0.0);
    for (auto& c : cases) c.image = Image(c.image.width, c.image.height, 0.5f);
    auto pool = builtin_pool();
    DeletionOptions d;
    d.steps = 4;
    d.random_orders = 2;
    const RunResult r = run_fidelity_incremental_deletion(cases, CamMethod::Ablation, pool, d, {});
    for (const char* order : {"importance", "reverse", "random"}) {
      CHECK(std::abs(mean_of(r, order, "area") - 1.0) < 1e-9);
    }
  }

  TEST_CASE("reverse order keeps clean lesions detected for longer") {
    PhantomConfig cfg;
    cfg.seed = 14;
    auto cases = generate_dataset(cfg, 8, 1.0);
    for (auto& c : cases) c.image = c.clean;
    auto pool = builtin_pool();
    DeletionOptions d;
    d.steps = 16;
    d.orders = {"importance", "reverse"};
    const RunResult r = run_fidelity_incremental_deletion(cases, CamMethod::Ablation, pool, d, {});
    CHECK(mean_of(r, "reverse", "steps_present") > mean_of(r, "importance", "steps_present"));
  }

  TEST_CASE("white-box self comparison") {
    const auto cases = small_cases(4, 10);
    auto pool = builtin_pool();
    const RunResult r = run_fidelity_whitebox(cases, CamMethod::Whitebox, pool, {});
    CHECK(mean_of(r, "whitebox", "ssim") == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(mean_of(r, "whitebox", "mse") == 0.0);
  }

  TEST_CASE("gate verdicts") {
    RunResult r;
    r.aggregates = {{"dose=1", "ssim", 1.0, 0, 5}, {"dose=0.25", "ssim", 0.9, 0, 5}, {"dose=1", "mse", 0.0, 0, 5}};
    GateConfig g;
    CHECK_FALSE(consistency_gate(r, g).has_value());
    g.min_mean_ssim = 0.85;
    CHECK(*consistency_gate(r, g));
    g.min_mean_ssim = 0.95;
    CHECK_FALSE(*consistency_gate(r, g));
    g = {};
    g.max_mean_mse = -1e-3;
    CHECK_THROWS_AS(g.validate(), ConfigError);

    RunResult sd;
    sd.aggregates = {{"peak", "score_drop", 0.7, 0, 5}, {"random", "score_drop", 0.1, 0, 5}};
    CHECK(*fidelity_separation(sd) == doctest::Approx(0.6));
    g = {};
    g.min_fidelity_separation = 0.5;
    CHECK(*fidelity_gate(sd, g));
    g.min_fidelity_separation = 0.7;
    CHECK_FALSE(*fidelity_gate(sd, g));
  }

  TEST_CASE("pipeline without gates runs everything and stamps no verdict") {
    const auto cases = small_cases(4, 11);
    auto pool = builtin_pool();
    PipelineConfig cfg;
    cfg.methods = {CamMethod::Eigen};
    cfg.perturbations = {PerturbationSpec{PerturbKind::Dose, {{1.0, 0, 0}, {0.5, 0, 0}}, 0}};
    cfg.fidelity.randomization_options.seeds = 1;
    cfg.fidelity.deletion.steps = 4;
    cfg.fidelity.deletion.random_orders = 1;
    const PipelineResult out = run_pipeline(cases, pool, cfg);
    CHECK_FALSE(out.gate_failed);
    CHECK_FALSE(out.provider_failed);
    bool seen[3] = {false, false, false};
    for (const auto& r : out.runs) {
      seen[static_cast<int>(r.criterion)] = true;
      CHECK_FALSE(r.pass.has_value());
    }
    CHECK(seen[0]);
    CHECK(seen[1]);
    CHECK(seen[2]);
  }

  TEST_CASE("an unsatisfiable consistency gate stops each method's chain") {
    const auto cases = small_cases(4, 12);
    auto pool = builtin_pool();
    PipelineConfig cfg;
    cfg.perturbations = {PerturbationSpec{PerturbKind::Rotation, {{0, 0, 0}}, 0}};
    cfg.gates.min_mean_ssim = 1.01;
    const PipelineResult out = run_pipeline(cases, pool, cfg);
    CHECK(out.gate_failed);
    REQUIRE(out.runs.size() == 2);
    for (const auto& r : out.runs) {
      CHECK(r.criterion == Criterion::Consistency);
      REQUIRE(r.pass.has_value());
      CHECK_FALSE(*r.pass);
    }
  }

  TEST_CASE("records are identical for any pool size") {
    const auto cases = small_cases(6, 13);
    PerturbationSpec spec{PerturbKind::Rotation, {{0, 0, 0}, {20, 0, 0}}, 0};
    auto p1 = builtin_pool(1);
    auto p4 = builtin_pool(4);
    const RunResult a = run_consistency(cases, CamMethod::Ablation, p1, spec, {});
    const RunResult b = run_consistency(cases, CamMethod::Ablation, p4, spec, {});
    const std::vector<RunResult> ra{a}, rb{b};
    CHECK(records_csv(ra) == records_csv(rb));
  }

  TEST_CASE("csv output") {
    RunResult r;
    r.records = {{"case-0000", "eigen", "consistency", "shift=2,2", "ssim", 0.5},
                 {"case-0001", "eigen", "plausibility", "lesion", "spearman", std::nullopt}};
    const std::vector<RunResult> runs{r};
    const std::string csv = records_csv(runs);
    CHECK(csv.rfind(csv_header() + "\n", 0) == 0);
    CHECK(csv.find("case-0000,eigen,consistency,\"shift=2,2\",ssim,0.5\n") != std::string::npos);
    CHECK(csv.find("case-0001,eigen,plausibility,lesion,spearman,\n") != std::string::npos);
    CHECK(format_value(0.1) == "0.10000000000000001");
  }

  TEST_CASE("run results round-trip through json") {
    RunResult r;
    r.criterion = Criterion::Fidelity;
    r.check = "single-deletion";
    r.method = "ablation";
    r.model_id = "refmodel";
    r.pass = true;
    r.aggregates = {{"peak", "score_drop", 0.75, 0.125, 10}};
    r.config = {{"separation", 0.5}};
    const RunResult back = nlohmann::json(r).get<RunResult>();
    CHECK(back.criterion == r.criterion);
    CHECK(back.check == r.check);
    CHECK(back.pass == r.pass);
    CHECK(back.aggregates == r.aggregates);
    CHECK(back.config == r.config);
    CHECK(nlohmann::json(back).dump() == nlohmann::json(r).dump());
  }

  TEST_CASE("methods need matching capabilities") {
    class PredictOnly final : public Provider {
     public:
      Capabilities capabilities() override { return Capabilities{1, {"predict"}}; }
      std::string model_id() override { return "p"; }
      Prediction predict(const Image&) override { return {}; }
      FeatureStack features(const Image&) override { return {}; }
      double ablated_score(const Image&, const FeatureStack&, int) override { return 0; }
    } p;
    CHECK_THROWS_AS(require_method(p, CamMethod::Eigen), CapabilityError);
    CHECK_THROWS_AS(require_method(p, CamMethod::Whitebox), CapabilityError);
  }
}
