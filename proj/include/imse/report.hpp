#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace imse {

struct CesaroSummary {
  double trailing = 0.0;  // mean over the trailing half
  double limsup = 0.0;    // max over trailing windows n/4, n/2, n
  double full = 0.0;      // mean over every step
};

// Window lengths are rounded down to a multiple of `period` (at least one period).
CesaroSummary cesaro(const std::vector<double>& seq, int period = 1);

struct RateReport {
  std::optional<double> rate_exact;
  double rate_lower = 0.0;  // half the trailing Cesaro mean of cmmse
  double rate_upper = 0.0;  // half the trailing Cesaro mean of pmmse
  double rate_lower_limsup = 0.0;
  double rate_upper_limsup = 0.0;
  double rate_lower_full = 0.0;
  double rate_upper_full = 0.0;
  std::optional<double> capacity;
  std::vector<double> per_step_cmmse;
  std::vector<double> per_step_pmmse;
  std::vector<double> stderr_cmmse;
  std::vector<double> stderr_pmmse;
  std::map<std::string, double> boundary_terms;
  std::map<std::string, double> diagnostics;
  std::string route;
  std::string units = "nats/step";
  int horizon = 0;

  void fill_bounds(int period = 1);
};

}  // namespace imse
