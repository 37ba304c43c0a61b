#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "xaieval/evalsuite.hpp"

namespace xai {

inline constexpr const char* kScorecardSchema = "xaieval/1";

struct Overview {
  std::string name;
  std::string abbreviation;
  std::string description;
  std::string type;  // e.g. "local, post-hoc"
  std::string citation;
  std::string software;

  friend bool operator==(const Overview&, const Overview&) = default;
};

struct ContextOfUse {
  std::string audience;
  std::string task;
  std::string model;

  friend bool operator==(const ContextOfUse&, const ContextOfUse&) = default;
};

/// Free-text half of the scorecard. Usefulness can only come from user
/// studies, so it is carried as an optional manually written summary.
struct DescriptiveSection {
  Overview overview;
  ContextOfUse context_of_use;
  std::vector<std::string> limitations_and_recommendations;
  std::string validation_setting;
  std::optional<std::string> usefulness_notes;

  /// SchemaError unless overview.name and context_of_use.task are non-empty.
  void validate() const;

  friend bool operator==(const DescriptiveSection&, const DescriptiveSection&) = default;
};

void to_json(nlohmann::json& j, const DescriptiveSection& d);
void from_json(const nlohmann::json& j, DescriptiveSection& d);

struct Scorecard {
  std::string schema = kScorecardSchema;
  std::string method;
  DescriptiveSection descriptive;
  std::vector<RunResult> runs;  // canonical order, aggregates only
  bool complete = false;        // all three criteria present
  nlohmann::json provenance = nlohmann::json::object();
};

/// Orders runs consistency -> plausibility -> fidelity (and by check within a
/// criterion) and validates the descriptive section. MixedRunsError when the
/// runs come from more than one method.
Scorecard build_scorecard(const DescriptiveSection& desc, std::span<const RunResult> runs,
                          nlohmann::json provenance = nlohmann::json::object());

std::string render_json(const Scorecard& card);
Scorecard parse_scorecard(const std::string& json_text);
std::string render_markdown(const Scorecard& card);
/// One aggregate table per criterion, keyed by relative path ("tables/<criterion>.csv").
std::map<std::string, std::string> render_csv_bundle(const Scorecard& card);
std::string aggregate_csv_header();

/// Writes scorecard.json, scorecard.md and tables/*.csv into `dir`.
void write_scorecard(const std::filesystem::path& dir, const Scorecard& card);

}  // namespace xai
