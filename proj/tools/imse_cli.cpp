#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "imse/imse.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitViolation = 2;

int report_failure(int status) {
  std::cerr << "imse: " << imse_status_string(status) << ": " << imse_last_error() << "\n";
  return kExitError;
}

// A path that exists is read as a file; "builtin:NAME" loads a bundled scenario.
int load(const std::string& target, imse_scenario** out) {
  const std::string prefix = "builtin:";
  if (target.rfind(prefix, 0) == 0 && !std::filesystem::exists(target))
    return imse_scenario_load_builtin(target.substr(prefix.size()).c_str(), out);
  return imse_scenario_load_file(target.c_str(), out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"I-MMSE rate and bound calculator"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (affects speed, never results)")
      ->check(CLI::NonNegativeNumber);
  app.set_version_flag("--version", std::string(imse_version()));

  auto* run = app.add_subcommand("run", "run a scenario file (or builtin:NAME)");
  std::string run_target, out_dir = ".";
  bool bits = false;
  run->add_option("file", run_target, "scenario JSON")->required();
  run->add_option("--out", out_dir, "output directory");
  run->add_flag("--bits", bits, "report information in bits instead of nats");

  auto* sweep = app.add_subcommand("sweep", "run a scenario once per parameter value");
  std::string sweep_target, param, values, sweep_out;
  bool sweep_bits = false;
  sweep->add_option("file", sweep_target, "scenario JSON (or builtin:NAME)")->required();
  sweep->add_option("--param", param, "top-level key or JSON pointer")->required();
  sweep->add_option("--values", values, "comma-separated values")->required();
  sweep->add_option("--out", sweep_out, "CSV file (stdout when omitted)");
  sweep->add_flag("--bits", sweep_bits, "report information in bits instead of nats");

  auto* builtins = app.add_subcommand("builtins", "list bundled scenarios");
  std::string show;
  builtins->add_option("--show", show, "print the JSON of one builtin");

  CLI11_PARSE(app, argc, argv);
  imse_set_threads(threads);

  if (*builtins) {
    for (size_t i = 0; i < imse_builtin_count(); ++i) {
      if (!show.empty()) {
        if (show == imse_builtin_name(i)) {
          std::cout << imse_builtin_json(i) << "\n";
          return kExitOk;
        }
        continue;
      }
      std::printf("%-30s %s\n", imse_builtin_name(i), imse_builtin_description(i));
    }
    if (!show.empty()) {
      std::cerr << "imse: no builtin named " << show << "\n";
      return kExitError;
    }
    return kExitOk;
  }

  imse_scenario* scenario = nullptr;
  int st = load(*run ? run_target : sweep_target, &scenario);
  if (st != IMSE_OK) return report_failure(st);

  imse_run_options opts{threads, (*run ? bits : sweep_bits) ? 1 : 0};
  if (*run) {
    imse_record* record = nullptr;
    st = imse_run(scenario, &opts, &record);
    imse_scenario_free(scenario);
    if (st != IMSE_OK) return report_failure(st);
    st = imse_record_write(record, out_dir.c_str());
    int violated = 0;
    if (st == IMSE_OK) st = imse_record_violation(record, &violated);
    char* json = nullptr;
    if (st == IMSE_OK) st = imse_record_report_json(record, 1, &json);
    imse_record_free(record);
    if (st != IMSE_OK) return report_failure(st);
    std::cout << json;
    imse_string_free(json);
    if (violated) {
      std::cerr << "imse: invariant or sandwich violation\n";
      return kExitViolation;
    }
    return kExitOk;
  }

  char* csv = nullptr;
  st = imse_sweep(scenario, param.c_str(), values.c_str(), &opts, &csv);
  imse_scenario_free(scenario);
  if (st != IMSE_OK) return report_failure(st);
  if (sweep_out.empty()) {
    std::cout << csv;
  } else {
    std::ofstream os(sweep_out, std::ios::binary);
    os << csv;
    if (!os) {
      imse_string_free(csv);
      std::cerr << "imse: cannot write " << sweep_out << "\n";
      return kExitError;
    }
  }
  imse_string_free(csv);
  return kExitOk;
}
