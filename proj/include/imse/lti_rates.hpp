#pragma once

#include <vector>

#include "imse/linalg.hpp"
#include "imse/report.hpp"
#include "imse/system.hpp"

namespace imse {

struct ModalSplit {
  Mat T;      // T A T^{-1} = blockdiag(A_s, A_u)
  Mat T_inv;
  Mat A_s, A_u;
  Mat B_s, B_u;  // rows of T B
  Mat C_s, C_u;  // columns of C T^{-1}
  int unstable_dim = 0;
  double offblock_residual = 0.0;  // relative to ||A||
  double condition = 1.0;
};

struct DareSolution {
  Mat P_minus;
  Mat P;
  int iterations = 0;
  double residual = 0.0;
};

struct FootnoteDiagnostics {
  std::vector<double> eta;  // eigenvalues of C_u P_u^- C_u^T
  double unstable_rate = 0.0;
  double identity_a_lhs = 0.0;  // 2 sum log|lambda+|
  double identity_a_rhs = 0.0;  // sum log(1 + eta)
  double identity_a_residual = 0.0;
  double steady_cmmse = 0.0;  // tr(C P C^T)
  double steady_pmmse = 0.0;  // tr(C P^- C^T)
  bool inequality_b = false;  // steady_cmmse / 2 <= unstable_rate
  bool inequality_c = false;  // steady_pmmse / 2 >= unstable_rate
  double trace_relation_residual = 0.0;  // |tr(C P C^T) - sum eta/(1+eta)|
  double doubled_trace_gap = 0.0;        // 2 sum eta/(1+eta) - tr(C P C^T)
  double woodbury_residual = 0.0;
  double causal_floor = 0.0;  // min sum eta/(1+eta) s.t. sum eta >= 2 rate
  bool causal_floor_respected = false;
};

struct EpsilonTrend {
  std::vector<double> epsilons;
  std::vector<double> pmmse;  // final-step pmmse per epsilon
  double extrapolated = 0.0;  // eps^2 Richardson estimate of the eps -> 0 value
  double exact_limit = 0.0;   // final-step pmmse of the eps = 0 recursion
};

double unstable_spectrum_rate(const Mat& A);

ModalSplit modal_decompose(const LtiSystemSpec& spec);

DareSolution solve_dare_antistable(const Mat& A_u, const Mat& C_u, double tol = 1e-12,
                                   int max_iterations = 100000);

// 1/2 log det(C_u P_u^- C_u^T + I)
double dare_rate(const DareSolution& dare, const Mat& C_u);

RateReport lti_rate_report(const LtiSystemSpec& spec, int horizon, double epsilon = 0.0);

// [2(n+1)]^{-1} sum_i log det(Sigma_i + I) over the horizon+1 covariances.
double capacity_with_power_limits(const std::vector<Mat>& covariances, int horizon);

// Sigma_U (control) or Sigma_Z (filtering) for steps 0..horizon.
std::vector<Mat> realized_input_covariances(const LtiSystemSpec& spec, int horizon,
                                            double epsilon = 0.0);

// Stationary Sigma_U = G Sigma_X G^T of the closed loop (control mode only).
Mat steady_input_covariance(const LtiSystemSpec& spec);

FootnoteDiagnostics footnote_identity_checks(const LtiSystemSpec& spec);

// || C P C^T - C P^- C^T (I + C P^- C^T)^{-1} || with P the Kalman posterior.
double woodbury_posterior_residual(const Mat& P_minus, const Mat& C);

// Corner solution of min sum eta/(1+eta) s.t. sum eta >= 2 rate, eta > 0.
double causal_mmse_floor(double info_rate);

EpsilonTrend filtering_epsilon_trend(const LtiSystemSpec& spec, int horizon,
                                     const std::vector<double>& epsilons = {1e-1, 1e-2, 1e-3});

}  // namespace imse
