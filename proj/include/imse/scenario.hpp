#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace imse {

using json = nlohmann::json;

inline constexpr const char* kToolVersion = "0.1.0";

struct Scenario {
  json doc;
  std::string name;
  std::string kind;
};

// Throws SchemaError naming the offending field.
Scenario parse_scenario(const json& doc);
Scenario parse_scenario_text(const std::string& text);
Scenario load_scenario_file(const std::string& path);

// `name` is a top-level key or a JSON pointer ("/system/A/0/0"). Throws UnknownParameter.
void set_scenario_param(Scenario& scenario, const std::string& name, const json& value);

std::string scenario_hash(const Scenario& scenario);

struct RunOptions {
  int threads = 0;
  bool bits = false;  // rescale information values by 1/ln 2 at emission
};

struct RunRecord {
  json report;  // wall time excluded
  double wall_time_s = 0.0;
  std::vector<std::string> outputs;
  std::string ledger_csv;
  std::string sandwich_csv;
  json headline;
  bool violation = false;
};

RunRecord run_scenario(const Scenario& scenario, const RunOptions& options = {});
std::string report_json_text(const RunRecord& record, bool include_wall_time);

// Writes the scenario's requested outputs into `dir` (temp file + rename).
void write_outputs(const RunRecord& record, const std::string& dir);

std::string headline_csv_header();
std::string headline_csv_row(const json& value, const RunRecord& record);
std::string sweep_csv(const Scenario& scenario, const std::string& param,
                      const std::vector<json>& values, const RunOptions& options = {});

struct BuiltinScenario {
  std::string name;
  std::string description;
  std::string text;
};

const std::vector<BuiltinScenario>& builtin_scenarios();
const BuiltinScenario* find_builtin(const std::string& name);

}  // namespace imse
