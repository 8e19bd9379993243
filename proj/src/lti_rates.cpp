#include "imse/lti_rates.hpp"

#include <algorithm>
#include <cmath>

#include "imse/errors.hpp"

namespace imse {

namespace {

void check_not_marginal(const Eigen::VectorXcd& eig) {
  for (const auto& lam : eig)
    if (std::abs(std::abs(lam) - 1.0) <= 1e-8)
      fail(ErrorCode::MarginalEigenvalue,
           "eigenvalue with modulus " + std::to_string(std::abs(lam)) + " is too close to 1");
}

Mat lyapunov(const Mat& F, const Mat& Q) {
  const Eigen::Index n = F.rows();
  if (n <= 12) {
    Mat K = Mat::Identity(n * n, n * n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) K.block(i * n, j * n, n, n) -= F(i, j) * F;
    Vec q = Eigen::Map<const Vec>(Q.data(), n * n);
    Vec x = K.partialPivLu().solve(q);
    return symmetrize(Eigen::Map<Mat>(x.data(), n, n));
  }
  Mat S = Q;
  for (int it = 0; it < 1000000; ++it) {
    Mat next = F * S * F.transpose() + Q;
    if ((next - S).norm() <= 1e-14 * std::max(1.0, next.norm())) return symmetrize(next);
    S = next;
  }
  fail(ErrorCode::NoConvergence, "Lyapunov iteration did not converge");
}

}  // namespace

double unstable_spectrum_rate(const Mat& A) {
  if (A.rows() != A.cols()) fail(ErrorCode::DimensionMismatch, "A must be square");
  Eigen::VectorXcd eig = eigenvalues(A);
  check_not_marginal(eig);
  double rate = 0.0;
  for (const auto& lam : eig)
    if (std::abs(lam) > 1.0) rate += std::log(std::abs(lam));
  return rate;
}

ModalSplit modal_decompose(const LtiSystemSpec& spec) {
  const Mat& A = spec.A;
  const Eigen::Index n = A.rows();
  if (n == 0 || A.cols() != n) fail(ErrorCode::DimensionMismatch, "A must be square");
  OrderedSchur sch = ordered_schur(A, true);
  check_not_marginal(sch.eig);
  const Eigen::Index s = sch.leading;
  const Eigen::Index u = n - s;

  ModalSplit out;
  out.unstable_dim = static_cast<int>(u);
  if (s == 0 || u == 0) {
    out.T = Mat::Identity(n, n);
    out.T_inv = Mat::Identity(n, n);
  } else {
    Mat S11 = sch.S.topLeftCorner(s, s);
    Mat S12 = sch.S.topRightCorner(s, u);
    Mat S22 = sch.S.bottomRightCorner(u, u);
    Mat X = solve_sylvester(S11, S22, -S12);
    Mat M = Mat::Identity(n, n), Minv = Mat::Identity(n, n);
    M.topRightCorner(s, u) = X;
    Minv.topRightCorner(s, u) = -X;
    out.T = Minv * sch.Q.transpose();
    out.T_inv = sch.Q * M;
  }
  out.condition = condition_number(out.T);
  if (!(out.condition <= 1e12))
    fail(ErrorCode::IllConditionedTransform,
         "modal transform condition number " + std::to_string(out.condition));
  Mat D = out.T * A * out.T_inv;
  out.A_s = D.topLeftCorner(s, s);
  out.A_u = D.bottomRightCorner(u, u);
  double off = std::max(s > 0 && u > 0 ? D.topRightCorner(s, u).norm() : 0.0,
                        s > 0 && u > 0 ? D.bottomLeftCorner(u, s).norm() : 0.0);
  out.offblock_residual = off / std::max(A.norm(), 1e-300);
  if (spec.B.size() > 0) {
    Mat TB = out.T * spec.B;
    out.B_s = TB.topRows(s);
    out.B_u = TB.bottomRows(u);
  }
  if (spec.C.size() > 0) {
    Mat CT = spec.C * out.T_inv;
    out.C_s = CT.leftCols(s);
    out.C_u = CT.rightCols(u);
  }
  return out;
}

DareSolution solve_dare_antistable(const Mat& A_u, const Mat& C_u, double tol,
                                   int max_iterations) {
  const Eigen::Index m = A_u.rows();
  DareSolution out;
  if (m == 0) {
    out.P_minus = Mat(0, 0);
    out.P = Mat(0, 0);
    return out;
  }
  if (A_u.cols() != m || C_u.cols() != m)
    fail(ErrorCode::DimensionMismatch, "A_u and C_u shapes disagree");
  for (const auto& lam : eigenvalues(A_u))
    if (std::abs(lam) <= 1.0) fail(ErrorCode::InvalidArgument, "A_u is not antistable");
  auto step = [&](const Mat& Pm) {
    return symmetrize(A_u * kalman_correct(Pm, C_u) * A_u.transpose());
  };
  Mat P = Mat::Identity(m, m);
  for (int it = 1; it <= max_iterations; ++it) {
    Mat next = step(P);
    if (!next.allFinite() || next.norm() > 1e12)
      fail(ErrorCode::NotDetectable, "Riccati iteration diverges; (A_u, C_u) not detectable");
    // relative: P can be tiny when C_u is large
    double res = (next - P).norm() / std::max(next.norm(), 1e-300);
    P = next;
    if (res < tol) {
      out.iterations = it;
      out.P_minus = P;
      out.P = kalman_correct(P, C_u);
      out.residual = (step(P) - P).norm() / std::max(P.norm(), 1e-300);
      return out;
    }
  }
  fail(ErrorCode::NoConvergence, "DARE iteration hit the iteration cap");
}

double dare_rate(const DareSolution& dare, const Mat& C_u) {
  if (dare.P_minus.size() == 0) return 0.0;
  const Eigen::Index p = C_u.rows();
  return 0.5 * logdet_spd(C_u * dare.P_minus * C_u.transpose() + Mat::Identity(p, p));
}

double capacity_with_power_limits(const std::vector<Mat>& covariances, int horizon) {
  if (horizon < 0 || covariances.size() != static_cast<std::size_t>(horizon) + 1)
    fail(ErrorCode::HorizonMismatch, "need horizon+1 covariances");
  double total = 0.0;
  for (const auto& S : covariances) {
    if (S.rows() != S.cols()) fail(ErrorCode::DimensionMismatch, "covariance must be square");
    if (!is_psd(S)) fail(ErrorCode::NotPSD, "covariance is not symmetric PSD");
    total += logdet_spd(S + Mat::Identity(S.rows(), S.rows()));
  }
  return total / (2.0 * (horizon + 1));
}

std::vector<Mat> realized_input_covariances(const LtiSystemSpec& spec, int horizon,
                                            double epsilon) {
  std::vector<Mat> out;
  Mat Sx = spec.prior();
  const bool ctrl = spec.mode == LoopMode::control;
  Mat F = ctrl ? spec.closed_loop() : spec.A;
  Mat Q = ctrl ? Mat(spec.B * spec.B.transpose())
               : Mat(epsilon * epsilon * spec.B * spec.B.transpose());
  for (int i = 0; i <= horizon; ++i) {
    out.push_back(symmetrize(spec.C * Sx * spec.C.transpose()));
    Sx = symmetrize(F * Sx * F.transpose() + Q);
  }
  return out;
}

Mat steady_input_covariance(const LtiSystemSpec& spec) {
  if (spec.mode != LoopMode::control)
    fail(ErrorCode::ModeMismatch, "steady input covariance is defined for control loops");
  Mat F = spec.closed_loop();
  if (spectral_radius(F) >= 1.0) fail(ErrorCode::UnstableClosedLoop, "closed loop is unstable");
  Mat Sx = lyapunov(F, spec.B * spec.B.transpose());
  return symmetrize(spec.C * Sx * spec.C.transpose());
}

double woodbury_posterior_residual(const Mat& P_minus, const Mat& C) {
  const Eigen::Index p = C.rows();
  Mat P = kalman_correct(P_minus, C);
  Mat M = C * P_minus * C.transpose();
  Mat rhs = M * (Mat::Identity(p, p) + M).inverse();
  return (C * P * C.transpose() - rhs).norm();
}

double causal_mmse_floor(double info_rate) {
  if (info_rate <= 0.0) return 0.0;
  return 2.0 * info_rate / (1.0 + 2.0 * info_rate);
}

FootnoteDiagnostics footnote_identity_checks(const LtiSystemSpec& spec) {
  FootnoteDiagnostics d;
  d.unstable_rate = unstable_spectrum_rate(spec.A);
  ModalSplit split = modal_decompose(spec);
  DareSolution dare = solve_dare_antistable(split.A_u, split.C_u);
  d.identity_a_lhs = 2.0 * d.unstable_rate;
  if (split.unstable_dim > 0) {
    Mat M = symmetrize(split.C_u * dare.P_minus * split.C_u.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(M, Eigen::EigenvaluesOnly);
    for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) {
      double eta = std::max(es.eigenvalues()(k), 0.0);
      d.eta.push_back(eta);
      d.identity_a_rhs += std::log1p(eta);
    }
    d.steady_pmmse = M.trace();
    d.steady_cmmse = (split.C_u * dare.P * split.C_u.transpose()).trace();
    d.woodbury_residual = woodbury_posterior_residual(dare.P_minus, split.C_u);
  }
  d.identity_a_residual = std::abs(d.identity_a_lhs - d.identity_a_rhs);
  double ratio_sum = 0.0;
  for (double eta : d.eta) ratio_sum += eta / (1.0 + eta);
  d.trace_relation_residual = std::abs(d.steady_cmmse - ratio_sum);
  d.doubled_trace_gap = 2.0 * ratio_sum - d.steady_cmmse;
  const double tol = 1e-9 * std::max(1.0, d.unstable_rate);
  d.inequality_b = 0.5 * d.steady_cmmse <= d.unstable_rate + tol;
  d.inequality_c = 0.5 * d.steady_pmmse >= d.unstable_rate - tol;
  d.causal_floor = causal_mmse_floor(d.unstable_rate);
  d.causal_floor_respected = d.steady_cmmse >= d.causal_floor - tol;
  return d;
}

EpsilonTrend filtering_epsilon_trend(const LtiSystemSpec& spec, int horizon,
                                     const std::vector<double>& epsilons) {
  if (spec.mode != LoopMode::filtering)
    fail(ErrorCode::ModeMismatch, "epsilon trend applies to filtering systems");
  EpsilonTrend t;
  t.epsilons = epsilons;
  LtvSystemSpec seq = ltv_from_lti(spec);
  for (double eps : epsilons) t.pmmse.push_back(riccati_mmse(seq, horizon, eps).pmmse.back());
  t.exact_limit = riccati_mmse(seq, horizon, 0.0).pmmse.back();
  const std::size_t k = t.pmmse.size();
  if (k >= 2) {
    double e1 = epsilons[k - 2] * epsilons[k - 2], e2 = epsilons[k - 1] * epsilons[k - 1];
    t.extrapolated = (e1 * t.pmmse[k - 1] - e2 * t.pmmse[k - 2]) / (e1 - e2);
  } else if (k == 1) {
    t.extrapolated = t.pmmse[0];
  }
  return t;
}

RateReport lti_rate_report(const LtiSystemSpec& spec, int horizon, double epsilon) {
  if (horizon < 1) fail(ErrorCode::InvalidArgument, "horizon must be at least 1");
  if (epsilon < 0.0) fail(ErrorCode::InvalidArgument, "epsilon must be non-negative");
  validate_lti(spec);
  const bool ctrl = spec.mode == LoopMode::control;
  const double eps = ctrl ? 0.0 : epsilon;

  RateReport r;
  r.horizon = horizon;
  r.route = ctrl ? "riccati_control" : "riccati_filtering";
  MmseSequence seq = riccati_mmse(ltv_from_lti(spec), horizon, eps);
  r.per_step_pmmse = seq.pmmse;
  r.per_step_cmmse = seq.cmmse;
  r.stderr_pmmse.assign(seq.pmmse.size(), 0.0);
  r.stderr_cmmse.assign(seq.cmmse.size(), 0.0);
  r.fill_bounds();
  r.diagnostics["info_rate"] = cesaro(seq.info, 1).trailing;
  r.rate_exact = unstable_spectrum_rate(spec.A);

  ModalSplit split = modal_decompose(spec);
  DareSolution dare = solve_dare_antistable(split.A_u, split.C_u);
  r.diagnostics["unstable_dim"] = split.unstable_dim;
  r.diagnostics["modal_offblock_residual"] = split.offblock_residual;
  r.diagnostics["dare_rate"] = dare_rate(dare, split.C_u);
  r.diagnostics["dare_iterations"] = dare.iterations;
  r.diagnostics["steady_pmmse"] =
      split.unstable_dim > 0 ? (split.C_u * dare.P_minus * split.C_u.transpose()).trace() : 0.0;
  r.diagnostics["steady_cmmse"] =
      split.unstable_dim > 0 ? (split.C_u * dare.P * split.C_u.transpose()).trace() : 0.0;

  // Boundary terms of the telescoped antistable recursion.
  if (split.unstable_dim > 0) {
    const Eigen::Index u = split.unstable_dim;
    Mat Pu = symmetrize((split.T * spec.prior() * split.T.transpose()).bottomRightCorner(u, u));
    if (Pu.llt().info() != Eigen::Success || Pu.determinant() <= 1e-300) Pu = Mat::Identity(u, u);
    double first = logdet_spd(symmetrize(Pu));
    double sum = 0.0;
    for (int i = 0; i <= horizon; ++i) {
      const Eigen::Index p = split.C_u.rows();
      sum += logdet_spd(split.C_u * Pu * split.C_u.transpose() + Mat::Identity(p, p));
      Pu = symmetrize(split.A_u * kalman_correct(Pu, split.C_u) * split.A_u.transpose());
    }
    double last = logdet_spd(Pu);
    r.boundary_terms["logdet_initial"] = first;
    r.boundary_terms["logdet_final"] = last;
    double lhs = 2.0 * (horizon + 1) * logabsdet(split.A_u);
    r.boundary_terms["telescoping_residual"] = std::abs(lhs - (sum + last - first));
  } else {
    r.boundary_terms["logdet_initial"] = 0.0;
    r.boundary_terms["logdet_final"] = 0.0;
    r.boundary_terms["telescoping_residual"] = 0.0;
  }

  if (ctrl) {
    r.capacity = capacity_with_power_limits(realized_input_covariances(spec, horizon), horizon);
    Mat Su = steady_input_covariance(spec);
    r.diagnostics["capacity_steady"] =
        0.5 * logdet_spd(Su + Mat::Identity(Su.rows(), Su.rows()));
  } else {
    if (spectral_radius(spec.A) < 1.0)
      r.capacity =
          capacity_with_power_limits(realized_input_covariances(spec, horizon, eps), horizon);
    EpsilonTrend t = filtering_epsilon_trend(spec, horizon);
    r.diagnostics["eps_trend_extrapolated_pmmse"] = t.extrapolated;
    r.diagnostics["eps_zero_pmmse"] = t.exact_limit;
    r.diagnostics["eps_trend_gap"] = std::abs(t.extrapolated - t.exact_limit);
  }
  return r;
}

}  // namespace imse
