#include "xaieval/dataset.hpp"

#include <algorithm>

#include "xaieval/errors.hpp"
#include "xaieval/io.hpp"

namespace xai {

namespace fs = std::filesystem;
using nlohmann::json;

int Dataset::lesion_count() const {
  return static_cast<int>(std::ranges::count_if(cases, [](const Case& c) { return c.has_lesion; }));
}

Dataset make_dataset(const PhantomConfig& cfg, int n_cases, double lesion_fraction, bool calibrate, int jobs) {
  Dataset ds;
  ds.config = cfg;
  ds.n_cases = n_cases;
  ds.lesion_fraction = lesion_fraction;
  ds.cases = generate_dataset(cfg, n_cases, lesion_fraction, jobs);
  if (calibrate) {
    RefModel model(default_filter_bank(), default_head(), cfg.lesion_radius);
    const Calibration cal = calibrate_threshold(cfg, model, 200, jobs);
    HeadWeights head = default_head();
    head.threshold = cal.threshold;
    ds.head = head;
    ds.calibration = cal;
  }
  return ds;
}

json manifest_json(const Dataset& ds) {
  json cases = json::array();
  for (const auto& c : ds.cases) {
    json e = {{"id", c.id},
              {"index", c.index},
              {"has_lesion", c.has_lesion},
              {"noise_seed", c.noise_seed},
              {"image", "cases/" + c.id + ".f32"},
              {"clean", "clean/" + c.id + ".f32"}};
    e["truth"] = c.truth ? json("truth/" + c.id + ".json") : json(nullptr);
    cases.push_back(std::move(e));
  }
  json j = {{"format", "xaieval-dataset/1"},
            {"config", ds.config},
            {"n_cases", ds.n_cases},
            {"lesion_fraction", ds.lesion_fraction},
            {"lesion_cases", ds.lesion_count()},
            {"cases", std::move(cases)}};
  j["head"] = ds.head ? json(*ds.head) : json(nullptr);
  j["calibration"] = ds.calibration ? json(*ds.calibration) : json(nullptr);
  return j;
}

void write_dataset(const fs::path& dir, const Dataset& ds) {
  std::error_code ec;
  for (const char* sub : {"cases", "clean", "truth"}) {
    fs::create_directories(dir / sub, ec);
    if (ec) throw IoError("cannot create " + (dir / sub).string() + ": " + ec.message());
  }
  for (const auto& c : ds.cases) {
    io::write_image(dir / "cases" / (c.id + ".f32"), c.image);
    io::write_pgm16(dir / "cases" / (c.id + ".pgm"), c.image);
    io::write_image(dir / "clean" / (c.id + ".f32"), c.clean);
    if (c.truth) io::write_truth(dir / "truth" / (c.id + ".json"), *c.truth, c.image.width, c.image.height);
  }
  io::write_text(dir / "manifest.json", manifest_json(ds).dump(2) + "\n");
}

Dataset read_dataset(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.json";
  if (!fs::exists(manifest)) throw IoError("no manifest.json in " + dir.string());
  const json j = io::read_json(manifest);
  Dataset ds;
  try {
    ds.config = j.at("config").get<PhantomConfig>();
    ds.n_cases = j.at("n_cases").get<int>();
    ds.lesion_fraction = j.at("lesion_fraction").get<double>();
    if (j.contains("head") && !j["head"].is_null()) ds.head = j["head"].get<HeadWeights>();
    if (j.contains("calibration") && !j["calibration"].is_null()) ds.calibration = j["calibration"].get<Calibration>();
    for (const auto& e : j.at("cases")) {
      Case c;
      c.id = e.at("id").get<std::string>();
      c.index = e.at("index").get<int>();
      c.has_lesion = e.at("has_lesion").get<bool>();
      c.noise_seed = e.value("noise_seed", std::uint64_t{0});
      c.provenance = ds.config;
      c.image = io::read_image(dir / e.at("image").get<std::string>());
      if (e.contains("clean") && !e["clean"].is_null()) {
        const fs::path clean = dir / e["clean"].get<std::string>();
        if (fs::exists(clean)) c.clean = io::read_image(clean);
      }
      if (e.contains("truth") && !e["truth"].is_null()) c.truth = io::read_truth(dir / e["truth"].get<std::string>());
      if (c.has_lesion != c.truth.has_value()) throw SchemaError(c.id + ": lesion flag and ground truth disagree");
      ds.cases.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw SchemaError(manifest.string() + ": " + e.what());
  }
  if (static_cast<int>(ds.cases.size()) != ds.n_cases) throw SchemaError(manifest.string() + ": case count mismatch");
  return ds;
}

}  // namespace xai
