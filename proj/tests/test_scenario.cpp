#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "imse/scenario.hpp"
#include "support.hpp"

using namespace imse;

namespace {

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

int column(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

Scenario builtin(const std::string& name) {
  const BuiltinScenario* b = find_builtin(name);
  REQUIRE(b != nullptr);
  return parse_scenario_text(b->text);
}

}  // namespace

TEST_CASE("scalar builtin reports log 2") {
  RunRecord rec = run_scenario(builtin("lti_scalar_log2"));
  CHECK(rec.headline.at("rate_exact").get<double>() == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  CHECK(rec.headline.at("rate_lower").get<double>() <= std::log(2.0) + 1e-9);
  CHECK(rec.headline.at("rate_upper").get<double>() >= std::log(2.0) - 1e-9);
  CHECK_FALSE(rec.violation);
  CHECK(rec.report.at("units") == "nats/step");
}

TEST_CASE("schema errors name the field") {
  json doc = json::parse(find_builtin("lti_scalar_log2")->text);
  doc.erase("seed");
  try {
    parse_scenario(doc);
    FAIL("no exception");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SchemaError);
    CHECK(std::string(e.what()).find("seed") != std::string::npos);
  }
  doc["seed"] = 1;
  doc["kind"] = "lti_smoothing";
  CHECK_CODE(parse_scenario(doc), ErrorCode::SchemaError);
  doc["kind"] = "lti_control";
  doc["horizon"] = -3;
  CHECK_CODE(parse_scenario(doc), ErrorCode::SchemaError);
  CHECK_CODE(parse_scenario_text("{not json"), ErrorCode::SchemaError);
  CHECK_CODE(load_scenario_file("/nonexistent/scenario.json"), ErrorCode::IoError);
}

TEST_CASE("builtin catalog") {
  const auto& cat = builtin_scenarios();
  CHECK(cat.size() >= 8);
  for (const auto& b : cat) {
    CAPTURE(b.name);
    Scenario s = parse_scenario_text(b.text);
    CHECK(s.name == b.name);
    CHECK_FALSE(b.description.empty());
  }
  for (const char* n : {"lti_scalar_log2", "lti_footnote_identity", "channel_constant_message",
                        "ltv_period2_bode", "lem46_epsilon_sweep"})
    CHECK(find_builtin(n) != nullptr);
  CHECK(find_builtin("nope") == nullptr);
}

TEST_CASE("oracle crosscheck builtin stays within tolerance") {
  RunRecord rec = run_scenario(builtin("oracle_crosscheck_scalar"));
  const json& o = rec.report.at("oracle");
  CHECK(o.at("gap").get<double>() < 2e-2);
  CHECK(o.at("within_tolerance").get<bool>());
  CHECK_FALSE(rec.violation);
}

TEST_CASE("tight tolerance is reported as a violation") {
  Scenario s = builtin("oracle_crosscheck_scalar");
  set_scenario_param(s, "horizon", 10);
  set_scenario_param(s, "tolerance", 1e-6);
  RunRecord rec = run_scenario(s);
  CHECK(rec.violation);
  CHECK(rec.report.at("violation").get<bool>());
}

TEST_CASE("epsilon sweep: stable block scales like epsilon squared") {
  Scenario s = builtin("lem46_epsilon_sweep");
  auto rows = parse_csv(sweep_csv(s, "epsilon", {json(1e-1), json(1e-2), json(1e-3)}));
  REQUIRE(rows.size() == 4);
  const int c = column(rows[0], "stable_block_norm");
  const int a = column(rows[0], "antistable_block");
  REQUIRE(c >= 0);
  REQUIRE(a >= 0);
  std::vector<double> le, ln;
  for (int r = 1; r <= 3; ++r) {
    le.push_back(std::log(std::stod(rows[r][0])));
    ln.push_back(std::log(std::stod(rows[r][c])));
  }
  const double slope = (ln[2] - ln[0]) / (le[2] - le[0]);
  CHECK(std::abs(slope - 2.0) < 0.1);
  CHECK(std::abs(std::stod(rows[3][a]) - 3.0) < 1e-3);
}

TEST_CASE("single-value sweep matches the run headline") {
  Scenario s = builtin("lti_scalar_log2");
  auto rows = parse_csv(sweep_csv(s, "horizon", {json(400)}));
  REQUIRE(rows.size() == 2);
  RunRecord rec = run_scenario(s);
  CHECK(rows[1] == parse_csv(headline_csv_row(json(400), rec))[0]);
  CHECK(rows[0] == parse_csv(headline_csv_header())[0]);
}

TEST_CASE("horizon sweep on the oracle approaches log 2") {
  Scenario s = builtin("oracle_crosscheck_scalar");
  auto rows = parse_csv(sweep_csv(s, "horizon", {json(50), json(100), json(200), json(400)}));
  REQUIRE(rows.size() == 5);
  const int c = column(rows[0], "info_rate");
  REQUIRE(c >= 0);
  double prev = 1e9;
  for (int r = 1; r <= 4; ++r) {
    const double gap = std::abs(std::stod(rows[r][c]) - std::log(2.0));
    CHECK(gap < prev);
    prev = gap;
  }
}

TEST_CASE("parameter overrides") {
  Scenario s = builtin("lti_scalar_log2");
  const std::string h0 = scenario_hash(s);
  set_scenario_param(s, "/system/A", 2.5);
  CHECK(scenario_hash(s) != h0);
  RunRecord rec = run_scenario(s);
  CHECK(rec.headline.at("rate_exact").get<double>() == doctest::Approx(std::log(2.5)).epsilon(1e-9));
  set_scenario_param(s, "/system/A", 3.0);
  CHECK_CODE(run_scenario(s), ErrorCode::UnstableClosedLoop);
  CHECK_CODE(set_scenario_param(s, "nope", 1), ErrorCode::UnknownParameter);
  CHECK_CODE(set_scenario_param(s, "/system/Z", 1), ErrorCode::UnknownParameter);
  CHECK_CODE(sweep_csv(s, "nope", {json(1)}), ErrorCode::UnknownParameter);
  CHECK_CODE(sweep_csv(s, "horizon", {}), ErrorCode::InvalidArgument);
}

TEST_CASE("bits rescales information values") {
  Scenario s = builtin("lti_scalar_log2");
  RunOptions bits;
  bits.bits = true;
  RunRecord n = run_scenario(s);
  RunRecord b = run_scenario(s, bits);
  CHECK(b.headline.at("rate_exact").get<double>() ==
        doctest::Approx(n.headline.at("rate_exact").get<double>() / std::log(2.0)).epsilon(1e-12));
  CHECK(b.headline.at("rate_exact").get<double>() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(b.report.at("units") == "bits/step");
  CHECK(b.report.at("scenario_hash") == n.report.at("scenario_hash"));
}

TEST_CASE("reports are identical across thread counts") {
  for (const char* name : {"lti_scalar_log2", "channel_feedback_regression", "nonlinear_linear_consistency"}) {
    CAPTURE(name);
    Scenario s = builtin(name);
    RunOptions one, eight;
    one.threads = 1;
    eight.threads = 8;
    CHECK(report_json_text(run_scenario(s, one), false) == report_json_text(run_scenario(s, eight), false));
  }
}

TEST_CASE("report carries hash and wall time only on request") {
  Scenario s = builtin("ltv_period2_bode");
  RunRecord rec = run_scenario(s);
  json j = json::parse(report_json_text(rec, false));
  CHECK(j.at("scenario_hash") == scenario_hash(s));
  CHECK_FALSE(j.contains("wall_time_s"));
  CHECK(json::parse(report_json_text(rec, true)).contains("wall_time_s"));
  CHECK(j.at("scenario") == "ltv_period2_bode");
}

TEST_CASE("csv outputs and write_outputs") {
  RunRecord rec = run_scenario(builtin("lti_scalar_log2"));
  auto ledger = parse_csv(rec.ledger_csv);
  REQUIRE(ledger.size() > 2);
  CHECK(column(ledger[0], "cmmse") >= 0);
  CHECK(column(ledger[0], "pmmse") >= 0);
  auto sw = parse_csv(rec.sandwich_csv);
  REQUIRE(sw.size() >= 2);
  CHECK(column(sw[0], "verdict") >= 0);

  auto dir = std::filesystem::temp_directory_path() / ("imse_out_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  write_outputs(rec, dir.string());
  for (const char* f : {"report.json", "ledger.csv", "sandwich.csv"}) CHECK(std::filesystem::exists(dir / f));
  std::ifstream is(dir / "ledger.csv");
  std::stringstream ss;
  ss << is.rdbuf();
  CHECK(ss.str() == rec.ledger_csv);
  for (const auto& e : std::filesystem::directory_iterator(dir))
    CHECK(e.path().filename().string().find(".tmp") == std::string::npos);
  std::filesystem::remove_all(dir);
}
