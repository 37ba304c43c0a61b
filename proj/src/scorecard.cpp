#include "xaieval/scorecard.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <filesystem>

#include "xaieval/errors.hpp"
#include "xaieval/io.hpp"

namespace xai {

using nlohmann::json;

void DescriptiveSection::validate() const {
  if (overview.name.empty()) throw SchemaError("descriptive section: overview.name is required");
  if (context_of_use.task.empty()) throw SchemaError("descriptive section: context_of_use.task is required");
}

void to_json(json& j, const DescriptiveSection& d) {
  j = json{{"overview",
            {{"name", d.overview.name},
             {"abbreviation", d.overview.abbreviation},
             {"description", d.overview.description},
             {"type", d.overview.type},
             {"citation", d.overview.citation},
             {"software", d.overview.software}}},
           {"context_of_use",
            {{"audience", d.context_of_use.audience},
             {"task", d.context_of_use.task},
             {"model", d.context_of_use.model}}},
           {"limitations_and_recommendations", d.limitations_and_recommendations},
           {"validation_setting", d.validation_setting}};
  j["usefulness_notes"] = d.usefulness_notes ? json(*d.usefulness_notes) : json(nullptr);
}

void from_json(const json& j, DescriptiveSection& d) {
  try {
    if (!j.contains("overview")) throw SchemaError("descriptive section: missing overview");
    const auto& o = j.at("overview");
    d.overview.name = o.value("name", "");
    d.overview.abbreviation = o.value("abbreviation", "");
    d.overview.description = o.value("description", "");
    d.overview.type = o.value("type", "");
    d.overview.citation = o.value("citation", "");
    d.overview.software = o.value("software", "");
    const json ctx = j.value("context_of_use", json::object());
    d.context_of_use.audience = ctx.value("audience", "");
    d.context_of_use.task = ctx.value("task", "");
    d.context_of_use.model = ctx.value("model", "");
    d.limitations_and_recommendations =
        j.value("limitations_and_recommendations", std::vector<std::string>{});
    d.validation_setting = j.value("validation_setting", "");
    d.usefulness_notes.reset();
    if (j.contains("usefulness_notes") && !j["usefulness_notes"].is_null()) {
      d.usefulness_notes = j["usefulness_notes"].get<std::string>();
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("descriptive section: ") + e.what());
  }
}

namespace {

constexpr std::array<Criterion, 3> kOrder = {Criterion::Consistency, Criterion::Plausibility, Criterion::Fidelity};

int check_rank(const RunResult& r) {
  static const std::array<const char*, 8> checks = {"dose",         "rotation",      "shift",
                                                   "ground-truth", "randomization", "single-deletion",
                                                   "incremental-deletion", "whitebox"};
  for (std::size_t i = 0; i < checks.size(); ++i) {
    if (r.check == checks[i]) return static_cast<int>(i);
  }
  return static_cast<int>(checks.size());
}

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string md_cell(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    out += c == '\n' ? ' ' : c;
  }
  return out.empty() ? "-" : out;
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string verdict(const RunResult& r) {
  std::string s = "status: " + r.status;
  if (r.pass) s += *r.pass ? ", gate: pass" : ", gate: FAIL";
  return s;
}

}  // namespace

Scorecard build_scorecard(const DescriptiveSection& desc, std::span<const RunResult> runs, json provenance) {
  desc.validate();
  Scorecard card;
  card.descriptive = desc;
  for (const auto& r : runs) {
    if (card.method.empty()) {
      card.method = r.method;
    } else if (r.method != card.method) {
      throw MixedRunsError("scorecard runs mix methods '" + card.method + "' and '" + r.method + "'");
    }
  }
  card.runs.assign(runs.begin(), runs.end());
  for (auto& r : card.runs) r.records.clear();
  std::ranges::stable_sort(card.runs, [](const RunResult& a, const RunResult& b) {
    if (a.criterion != b.criterion) return static_cast<int>(a.criterion) < static_cast<int>(b.criterion);
    return check_rank(a) < check_rank(b);
  });
  card.complete = std::ranges::all_of(kOrder, [&](Criterion c) {
    return std::ranges::any_of(card.runs, [&](const RunResult& r) { return r.criterion == c; });
  });
  card.provenance = provenance.is_object() ? std::move(provenance) : json::object();
  return card;
}

std::string render_json(const Scorecard& card) {
  json quantitative = json::object();
  for (Criterion c : kOrder) {
    json list = json::array();
    for (const auto& r : card.runs) {
      if (r.criterion == c) list.push_back(r);
    }
    quantitative[to_string(c)] = std::move(list);
  }
  const json j = {{"schema", card.schema},
                  {"method", card.method},
                  {"complete", card.complete},
                  {"descriptive", card.descriptive},
                  {"quantitative", std::move(quantitative)},
                  {"provenance", card.provenance}};
  return j.dump(2) + "\n";
}

Scorecard parse_scorecard(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("scorecard: ") + e.what());
  }
  Scorecard card;
  try {
    card.schema = j.at("schema").get<std::string>();
    if (card.schema != kScorecardSchema) throw SchemaError("unsupported scorecard schema '" + card.schema + "'");
    card.method = j.at("method").get<std::string>();
    card.complete = j.at("complete").get<bool>();
    card.descriptive = j.at("descriptive").get<DescriptiveSection>();
    for (Criterion c : kOrder) {
      for (const auto& r : j.at("quantitative").at(to_string(c))) card.runs.push_back(r.get<RunResult>());
    }
    card.provenance = j.value("provenance", json::object());
  } catch (const json::exception& e) {
    throw SchemaError(std::string("scorecard: ") + e.what());
  }
  card.descriptive.validate();
  return card;
}

std::string render_markdown(const Scorecard& card) {
  const auto& d = card.descriptive;
  std::string md;
  md += "# Explainability scorecard: " + d.overview.name;
  if (!d.overview.abbreviation.empty()) md += " (" + d.overview.abbreviation + ")";
  md += "\n\n";
  md += "Schema `" + card.schema + "`, method `" + card.method + "`. ";
  md += card.complete ? "All three quantitative criteria were evaluated.\n\n"
                      : "**Incomplete:** not every quantitative criterion was evaluated.\n\n";

  md += "## Descriptive section\n\n";
  md += "### 1. Overview of the method\n\n";
  md += "| Field | Value |\n|---|---|\n";
  md += "| Name | " + md_cell(d.overview.name) + " |\n";
  md += "| Abbreviation | " + md_cell(d.overview.abbreviation) + " |\n";
  md += "| Description | " + md_cell(d.overview.description) + " |\n";
  md += "| Type | " + md_cell(d.overview.type) + " |\n";
  md += "| Citation | " + md_cell(d.overview.citation) + " |\n";
  md += "| Software | " + md_cell(d.overview.software) + " |\n\n";

  md += "### 2. Context of use\n\n";
  md += "| Field | Value |\n|---|---|\n";
  md += "| Audience | " + md_cell(d.context_of_use.audience) + " |\n";
  md += "| Task | " + md_cell(d.context_of_use.task) + " |\n";
  md += "| Model | " + md_cell(d.context_of_use.model) + " |\n\n";

  md += "### 3. Limitations and recommendations\n\n";
  if (d.limitations_and_recommendations.empty()) md += "None recorded.\n";
  for (const auto& item : d.limitations_and_recommendations) md += "- " + item + "\n";
  md += "\n";

  md += "### 4. Validation setting\n\n";
  md += (d.validation_setting.empty() ? std::string("Not specified.") : d.validation_setting) + "\n\n";

  md += "### Usefulness\n\n";
  md += d.usefulness_notes ? *d.usefulness_notes + "\n\n"
                           : std::string("No user-study results recorded. Usefulness is assessed only through "
                                         "studies with the intended users.\n\n");

  md += "## Quantitative section\n\n";
  for (Criterion c : kOrder) {
    std::string title = to_string(c);
    title[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(title[0])));
    md += "### " + title + "\n\n";
    bool any = false;
    for (const auto& r : card.runs) {
      if (r.criterion != c) continue;
      any = true;
      md += "#### " + r.check + " (" + verdict(r) + ")\n\n";
      if (!r.error.empty()) md += "> " + md_cell(r.error) + "\n\n";
      if (r.aggregates.empty()) {
        md += "No aggregate rows.\n\n";
        continue;
      }
      md += "| Variant | Metric | Mean | Std | n |\n|---|---|---|---|---|\n";
      for (const auto& row : r.aggregates) {
        md += "| " + md_cell(row.variant) + " | " + md_cell(row.metric) + " | " + fmt6(row.mean) + " | " +
              fmt6(row.std) + " | " + std::to_string(row.n) + " |\n";
      }
      md += "\n";
    }
    if (!any) md += "Not evaluated.\n\n";
  }

  md += "## Provenance\n\n";
  md += "```json\n" + card.provenance.dump(2) + "\n```\n";
  return md;
}

std::string aggregate_csv_header() { return "method,criterion,check,variant,metric,mean,std,n"; }

std::map<std::string, std::string> render_csv_bundle(const Scorecard& card) {
  std::map<std::string, std::string> files;
  for (Criterion c : kOrder) {
    std::string csv = aggregate_csv_header() + "\n";
    for (const auto& r : card.runs) {
      if (r.criterion != c) continue;
      for (const auto& row : r.aggregates) {
        csv += csv_cell(r.method) + ',' + to_string(c) + ',' + csv_cell(r.check) + ',' + csv_cell(row.variant) + ',' +
               csv_cell(row.metric) + ',' + format_value(row.mean) + ',' + format_value(row.std) + ',' +
               std::to_string(row.n) + '\n';
      }
    }
    files["tables/" + to_string(c) + ".csv"] = std::move(csv);
  }
  return files;
}

void write_scorecard(const std::filesystem::path& dir, const Scorecard& card) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "tables", ec);
  if (ec) throw IoError("cannot create " + (dir / "tables").string() + ": " + ec.message());
  io::write_text(dir / "scorecard.json", render_json(card));
  io::write_text(dir / "scorecard.md", render_markdown(card));
  for (const auto& [name, text] : render_csv_bundle(card)) io::write_text(dir / name, text);
}

}  // namespace xai
