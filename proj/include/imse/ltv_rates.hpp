#pragma once

#include <optional>
#include <string>
#include <vector>

#include "imse/linalg.hpp"
#include "imse/report.hpp"
#include "imse/system.hpp"

namespace imse {

struct DichotomySplit {
  std::vector<Mat> T;      // steps 0..window
  std::vector<Mat> T_inv;  // steps 0..window
  std::vector<Mat> A_s, A_u, B_s, B_u, C_s, C_u;  // steps 0..window-1
  int unstable_dim = 0;
  double max_residual = 0.0;  // max_i ||offblock(T_{i+1} A_i T_i^{-1})|| / ||A_i||
  double max_condition = 1.0;
  std::optional<int> period;
  std::vector<double> multiplier_moduli;  // monodromy (or eigenvalue) moduli, descending
  std::string source;                     // constant | periodic | declared
};

struct TransitionAccumulator {
  double log_det_running = 0.0;
  int window_begin = 0;
  int window_end = 0;  // exclusive
  std::vector<double> per_step_logdet;
};

struct TransitionRate {
  double rate = 0.0;         // trailing-window mean of log|det A_u(i)|
  double rate_full = 0.0;    // mean over all n_max steps
  double rate_limsup = 0.0;  // max over trailing windows n/4, n/2, n
  TransitionAccumulator accumulator;
};

struct VanishingNoiseLevel {
  double epsilon = 0.0;
  double stable_norm = 0.0;
  double cross_norm = 0.0;
  double antistable_norm = 0.0;
  double antistable_distance = 0.0;  // to the eps = 0 limit
};

struct VanishingNoiseDiagnostics {
  std::vector<VanishingNoiseLevel> levels;
  std::optional<double> stable_slope;  // log-log least squares
  std::optional<double> cross_slope;
  Mat antistable_limit;  // eps = 0 antistable recursion at the final step
  std::optional<Mat> antistable_extrapolated;
  std::optional<double> extrapolated_distance;
  int unstable_dim = 0;
};

DichotomySplit dichotomy_split(const LtvSystemSpec& spec, int window);

TransitionRate transition_logdet_rate(const std::vector<Mat>& A_u_seq, int n_max,
                                      std::optional<int> period = std::nullopt);

// P(0..horizon+1) of P(i+1) = A_u(i) [P(i) - P C^T (C P C^T + I)^{-1} C P] A_u(i)^T.
std::vector<Mat> rde_antistable_trajectory(const std::vector<Mat>& A_u_seq,
                                           const std::vector<Mat>& C_u_seq, const Mat& P0,
                                           int horizon);

RateReport ltv_rate_report(const LtvSystemSpec& spec, int horizon, double epsilon = 0.0);

VanishingNoiseDiagnostics vanishing_noise_structure(const LtvSystemSpec& spec,
                                                    const std::vector<double>& epsilons,
                                                    int horizon);

// sum over unstable Floquet exponents, log(kappa) with kappa = |mu|^{1/p}.
double spectrum_lower_bound(const DichotomySplit& split);

}  // namespace imse
