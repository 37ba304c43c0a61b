#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "xaieval/phantom.hpp"
#include "xaieval/refmodel.hpp"

namespace xai {

/// A generated case collection plus the detector head calibrated for it.
struct Dataset {
  PhantomConfig config;
  int n_cases = 0;
  double lesion_fraction = 0.0;
  std::optional<HeadWeights> head;
  std::optional<Calibration> calibration;
  std::vector<Case> cases;

  int lesion_count() const;
};

/// generate_dataset() and, when `calibrate` is set, calibrate_threshold() on
/// the default reference model (seeded from cfg.seed).
Dataset make_dataset(const PhantomConfig& cfg, int n_cases, double lesion_fraction, bool calibrate,
                     int jobs = 1);

/// Directory layout:
///   manifest.json                     config echo, head, calibration, case list
///   cases/<id>.f32 + <id>.json        noisy observation (raw float32 + sidecar)
///   cases/<id>.pgm                    16-bit preview of the observation
///   clean/<id>.f32 + <id>.json        noiseless composite (dose provenance)
///   truth/<id>.json                   ground truth, with <id>.mask.f32 / <id>.context.f32
void write_dataset(const std::filesystem::path& dir, const Dataset& ds);

/// Reads a dataset directory. Missing clean composites are tolerated (the
/// dose perturbation then uses its additive fallback).
Dataset read_dataset(const std::filesystem::path& dir);

nlohmann::json manifest_json(const Dataset& ds);

}  // namespace xai
