#include "imse/imse.h"

#include <cstdlib>
#include <cstring>
#include <sstream>
#include <string>

#include "imse/errors.hpp"
#include "imse/lti_rates.hpp"
#include "imse/parallel.hpp"
#include "imse/scenario.hpp"

struct imse_scenario {
  imse::Scenario s;
};

struct imse_record {
  imse::RunRecord r;
};

static_assert(static_cast<int>(imse::ErrorCode::SingularCovariance) == IMSE_SINGULAR_COVARIANCE);
static_assert(static_cast<int>(imse::ErrorCode::SchemaError) == IMSE_SCHEMA_ERROR);
static_assert(static_cast<int>(imse::ErrorCode::IoError) == IMSE_IO_ERROR);

namespace {

thread_local std::string last_error;

template <class F>
int guarded(F&& f) {
  try {
    f();
    last_error.clear();
    return IMSE_OK;
  } catch (const imse::Error& e) {
    last_error = e.what();
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    last_error = e.what();
    return IMSE_INTERNAL_ERROR;
  } catch (...) {
    last_error = "unknown failure";
    return IMSE_INTERNAL_ERROR;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

imse::RunOptions run_options(const imse_run_options* o) {
  imse::RunOptions r;
  if (o) {
    r.threads = o->threads;
    r.bits = o->bits != 0;
  }
  return r;
}

void need(const void* p, const char* what) {
  if (!p) imse::fail(imse::ErrorCode::InvalidArgument, std::string(what) + " is null");
}

}  // namespace

extern "C" {

const char* imse_version(void) { return imse::kToolVersion; }

const char* imse_status_string(int status) {
  if (status == IMSE_OK) return "Ok";
  if (status == IMSE_INTERNAL_ERROR) return "InternalError";
  if (status >= 1 && status <= IMSE_IO_ERROR)
    return imse::error_name(static_cast<imse::ErrorCode>(status));
  return "UnknownStatus";
}

const char* imse_last_error(void) { return last_error.c_str(); }

void imse_set_threads(int threads) { imse::set_default_threads(threads); }

int imse_scenario_load_file(const char* path, imse_scenario** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new imse_scenario{imse::load_scenario_file(path)};
  });
}

int imse_scenario_load_builtin(const char* name, imse_scenario** out) {
  return guarded([&] {
    need(name, "name");
    need(out, "out");
    const imse::BuiltinScenario* b = imse::find_builtin(name);
    if (!b) imse::fail(imse::ErrorCode::InvalidArgument, std::string("no builtin named ") + name);
    *out = new imse_scenario{imse::parse_scenario_text(b->text)};
  });
}

int imse_scenario_parse(const char* json_text, imse_scenario** out) {
  return guarded([&] {
    need(json_text, "json_text");
    need(out, "out");
    *out = new imse_scenario{imse::parse_scenario_text(json_text)};
  });
}

int imse_scenario_set_param(imse_scenario* scenario, const char* name, const char* json_value) {
  return guarded([&] {
    need(scenario, "scenario");
    need(name, "name");
    need(json_value, "json_value");
    imse::json v;
    try {
      v = imse::json::parse(json_value);
    } catch (const imse::json::exception&) {
      imse::fail(imse::ErrorCode::InvalidArgument,
                 std::string("value is not a JSON literal: ") + json_value);
    }
    imse::set_scenario_param(scenario->s, name, v);
  });
}

int imse_scenario_name(const imse_scenario* scenario, const char** out) {
  return guarded([&] {
    need(scenario, "scenario");
    need(out, "out");
    *out = scenario->s.name.c_str();
  });
}

void imse_scenario_free(imse_scenario* scenario) { delete scenario; }

int imse_run(const imse_scenario* scenario, const imse_run_options* options, imse_record** out) {
  return guarded([&] {
    need(scenario, "scenario");
    need(out, "out");
    *out = new imse_record{imse::run_scenario(scenario->s, run_options(options))};
  });
}

int imse_record_report_json(const imse_record* record, int include_wall_time, char** out) {
  return guarded([&] {
    need(record, "record");
    need(out, "out");
    *out = dup_string(imse::report_json_text(record->r, include_wall_time != 0));
  });
}

int imse_record_violation(const imse_record* record, int* violated) {
  return guarded([&] {
    need(record, "record");
    need(violated, "violated");
    *violated = record->r.violation ? 1 : 0;
  });
}

int imse_record_write(const imse_record* record, const char* dir) {
  return guarded([&] {
    need(record, "record");
    need(dir, "dir");
    imse::write_outputs(record->r, dir);
  });
}

void imse_record_free(imse_record* record) { delete record; }

int imse_sweep(const imse_scenario* scenario, const char* param, const char* values,
               const imse_run_options* options, char** csv_out) {
  return guarded([&] {
    need(scenario, "scenario");
    need(param, "param");
    need(values, "values");
    need(csv_out, "csv_out");
    std::vector<imse::json> vs;
    std::stringstream ss(values);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        vs.push_back(imse::json::parse(item));
      } catch (const imse::json::exception&) {
        imse::fail(imse::ErrorCode::InvalidArgument, "cannot parse sweep value '" + item + "'");
      }
    }
    *csv_out = dup_string(imse::sweep_csv(scenario->s, param, vs, run_options(options)));
  });
}

void imse_string_free(char* s) { std::free(s); }

size_t imse_builtin_count(void) { return imse::builtin_scenarios().size(); }

const char* imse_builtin_name(size_t index) {
  const auto& b = imse::builtin_scenarios();
  return index < b.size() ? b[index].name.c_str() : nullptr;
}

const char* imse_builtin_description(size_t index) {
  const auto& b = imse::builtin_scenarios();
  return index < b.size() ? b[index].description.c_str() : nullptr;
}

const char* imse_builtin_json(size_t index) {
  const auto& b = imse::builtin_scenarios();
  return index < b.size() ? b[index].text.c_str() : nullptr;
}

int imse_unstable_spectrum_rate(const double* a_row_major, size_t n, double* out) {
  return guarded([&] {
    need(a_row_major, "a_row_major");
    need(out, "out");
    if (n == 0) imse::fail(imse::ErrorCode::InvalidArgument, "empty matrix");
    const auto N = static_cast<Eigen::Index>(n);
    imse::Mat A = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                 Eigen::RowMajor>>(a_row_major, N, N);
    *out = imse::unstable_spectrum_rate(A);
  });
}

int imse_capacity(const double* covariances, size_t dim, size_t steps, double* out) {
  return guarded([&] {
    need(covariances, "covariances");
    need(out, "out");
    if (dim == 0 || steps == 0) imse::fail(imse::ErrorCode::InvalidArgument, "empty input");
    const auto d = static_cast<Eigen::Index>(dim);
    std::vector<imse::Mat> covs;
    for (size_t i = 0; i < steps; ++i)
      covs.push_back(Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                    Eigen::RowMajor>>(covariances + i * dim * dim,
                                                                      d, d));
    *out = imse::capacity_with_power_limits(covs, static_cast<int>(steps) - 1);
  });
}

}  // extern "C"
