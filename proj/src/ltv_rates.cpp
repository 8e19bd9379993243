#include "imse/ltv_rates.hpp"

#include <algorithm>
#include <cmath>

#include "imse/errors.hpp"
#include "imse/lti_rates.hpp"

namespace imse {

namespace {

Mat antistable_block(const Mat& T, const Mat& P, int u) {
  return symmetrize((T * P * T.transpose()).bottomRightCorner(u, u));
}

Mat positive_definite_or_identity(const Mat& P) {
  Eigen::LLT<Mat> llt(P);
  if (P.size() == 0 || (llt.info() == Eigen::Success && P.determinant() > 1e-300)) return P;
  return Mat::Identity(P.rows(), P.cols());
}

void fill_blocks(const LtvSystemSpec& spec, DichotomySplit& out, int window) {
  const Eigen::Index n = spec.state_dim();
  const int u = out.unstable_dim;
  const Eigen::Index s = n - u;
  for (int i = 0; i < window; ++i) {
    Mat A = spec.A.at(i);
    if (A.norm() >= spec.norm_cap)
      fail(ErrorCode::ValidationFailure, "||A_" + std::to_string(i) + "|| exceeds the norm cap");
    Mat D = out.T[i + 1] * A * out.T_inv[i];
    double off = 0.0;
    if (s > 0 && u > 0)
      off = std::max(D.topRightCorner(s, u).norm(), D.bottomLeftCorner(u, s).norm());
    double rel = off / std::max(A.norm(), 1e-300);
    if (rel >= 1e-9 && off > 1e-14)
      fail(ErrorCode::ValidationFailure,
           "split does not block-diagonalize A at step " + std::to_string(i));
    out.max_residual = std::max(out.max_residual, rel);
    out.A_s.push_back(D.topLeftCorner(s, s));
    out.A_u.push_back(D.bottomRightCorner(u, u));
    if (!spec.B.empty()) {
      Mat TB = out.T[i + 1] * spec.B.at(i);
      out.B_s.push_back(TB.topRows(s));
      out.B_u.push_back(TB.bottomRows(u));
    }
    Mat CT = spec.C.at(i) * out.T_inv[i];
    out.C_s.push_back(CT.leftCols(s));
    out.C_u.push_back(CT.rightCols(u));
  }
}

void check_condition(DichotomySplit& out) {
  for (std::size_t i = 0; i < out.T.size(); ++i) {
    double c = condition_number(out.T[i]);
    if (!(c <= 1e12))
      fail(ErrorCode::IllConditionedTransform,
           "split transform at step " + std::to_string(i) + " has condition " + std::to_string(c));
    out.max_condition = std::max(out.max_condition, c);
  }
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  const double k = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]) / k;
    my += std::log(y[i]) / k;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace

DichotomySplit dichotomy_split(const LtvSystemSpec& spec, int window) {
  if (window < 1) fail(ErrorCode::InvalidArgument, "window must be at least 1");
  const Eigen::Index n = spec.state_dim();
  if (n == 0 || spec.A.cols() != n) fail(ErrorCode::DimensionMismatch, "A_i must be square");
  if (spec.C.cols() != n) fail(ErrorCode::DimensionMismatch, "C_i must have n columns");
  DichotomySplit out;

  if (spec.declared_split) {
    const auto& ds = *spec.declared_split;
    if (ds.unstable_dim < 0 || ds.unstable_dim > n)
      fail(ErrorCode::InvalidArgument, "declared unstable dimension out of range");
    out.source = "declared";
    out.unstable_dim = ds.unstable_dim;
    out.period = common_period({&spec.A, &ds.T});
    for (int i = 0; i <= window; ++i) {
      Mat T = ds.T.at(i);
      if (T.rows() != n || T.cols() != n)
        fail(ErrorCode::DimensionMismatch, "declared T_i must be n x n");
      Eigen::FullPivLU<Mat> lu(T);
      if (!lu.isInvertible())
        fail(ErrorCode::ValidationFailure, "declared T is singular at step " + std::to_string(i));
      out.T.push_back(T);
      out.T_inv.push_back(lu.inverse());
    }
    check_condition(out);
    fill_blocks(spec, out, window);
    return out;
  }

  if (spec.A.kind() == MatrixSequence::Kind::constant) {
    LtiSystemSpec lti;
    lti.A = spec.A.at(0);
    ModalSplit m = modal_decompose(lti);
    out.source = "constant";
    out.unstable_dim = m.unstable_dim;
    out.period = 1;
    out.T.assign(static_cast<std::size_t>(window) + 1, m.T);
    out.T_inv.assign(static_cast<std::size_t>(window) + 1, m.T_inv);
    for (const auto& lam : eigenvalues(lti.A)) out.multiplier_moduli.push_back(std::abs(lam));
    std::sort(out.multiplier_moduli.rbegin(), out.multiplier_moduli.rend());
    out.max_condition = m.condition;
    fill_blocks(spec, out, window);
    return out;
  }

  auto period = spec.A.period();
  if (!period)
    fail(ErrorCode::NoSplitAvailable,
         "aperiodic A sequence without a declared split; supply declared_split");
  const int p = *period;
  Mat Phi = Mat::Identity(n, n);
  for (int i = 0; i < p; ++i) Phi = spec.A.at(i) * Phi;
  Eigen::VectorXcd mult = eigenvalues(Phi);
  for (const auto& mu : mult) {
    if (std::abs(std::abs(mu) - 1.0) <= 1e-8)
      fail(ErrorCode::MarginalMonodromy,
           "monodromy multiplier with modulus " + std::to_string(std::abs(mu)));
    out.multiplier_moduli.push_back(std::abs(mu));
  }
  std::sort(out.multiplier_moduli.rbegin(), out.multiplier_moduli.rend());
  OrderedSchur st = ordered_schur(Phi, true);
  OrderedSchur un = ordered_schur(Phi, false);
  const int s = st.leading, u = un.leading;
  if (s + u != n) fail(ErrorCode::MarginalMonodromy, "monodromy has no clean dichotomy");
  out.source = "periodic";
  out.unstable_dim = u;
  out.period = p;
  // Propagate the invariant subspaces of the monodromy across one period.
  std::vector<Mat> V(static_cast<std::size_t>(p));
  Mat Vs = st.Q.leftCols(s), Vu = un.Q.leftCols(u);
  for (int i = 0; i < p; ++i) {
    Mat Vi(n, n);
    Vi << Vs, Vu;
    V[static_cast<std::size_t>(i)] = Vi;
    Mat Ai = spec.A.at(i);
    Vs = orthonormal_basis(Ai * Vs);
    Vu = orthonormal_basis(Ai * Vu);
  }
  for (int i = 0; i <= window; ++i) {
    const Mat& Vi = V[static_cast<std::size_t>(i % p)];
    Eigen::FullPivLU<Mat> lu(Vi);
    if (!lu.isInvertible())
      fail(ErrorCode::IllConditionedTransform, "split subspaces collapse at step " +
                                                   std::to_string(i));
    out.T.push_back(lu.inverse());
    out.T_inv.push_back(Vi);
  }
  check_condition(out);
  fill_blocks(spec, out, window);
  return out;
}

TransitionRate transition_logdet_rate(const std::vector<Mat>& A_u_seq, int n_max,
                                      std::optional<int> period) {
  if (n_max < 1 || static_cast<std::size_t>(n_max) > A_u_seq.size())
    fail(ErrorCode::HorizonMismatch, "n_max must be within the supplied sequence");
  TransitionRate out;
  auto& acc = out.accumulator;
  acc.window_begin = 0;
  acc.window_end = n_max;
  for (int i = 0; i < n_max; ++i) {
    const Mat& Au = A_u_seq[static_cast<std::size_t>(i)];
    double ld = 0.0;
    if (Au.size() > 0) {
      ld = logabsdet(Au);
      if (!(ld > std::log(1e-300)))
        fail(ErrorCode::SingularStep, "A_u is singular at step " + std::to_string(i));
    }
    acc.per_step_logdet.push_back(ld);
    acc.log_det_running += ld;
  }
  CesaroSummary c = cesaro(acc.per_step_logdet, period.value_or(1));
  out.rate = c.trailing;
  out.rate_full = c.full;
  out.rate_limsup = c.limsup;
  return out;
}

std::vector<Mat> rde_antistable_trajectory(const std::vector<Mat>& A_u_seq,
                                           const std::vector<Mat>& C_u_seq, const Mat& P0,
                                           int horizon) {
  if (horizon < 0 || A_u_seq.size() < static_cast<std::size_t>(horizon) + 1 ||
      C_u_seq.size() < static_cast<std::size_t>(horizon) + 1)
    fail(ErrorCode::HorizonMismatch, "sequences shorter than horizon+1");
  if (!is_psd(P0)) fail(ErrorCode::NotPSD, "P0 is not symmetric PSD");
  std::vector<Mat> traj;
  traj.reserve(static_cast<std::size_t>(horizon) + 2);
  traj.push_back(P0);
  Mat P = P0;
  for (int i = 0; i <= horizon; ++i) {
    const Mat& A = A_u_seq[static_cast<std::size_t>(i)];
    const Mat& C = C_u_seq[static_cast<std::size_t>(i)];
    Mat next = A * kalman_correct(P, C) * A.transpose();
    double scale = std::max(1.0, next.norm());
    if (!next.allFinite() || next.norm() > 1e12)
      fail(ErrorCode::NumericalBlowup, "Riccati iterate norm exceeds 1e12 at step " +
                                           std::to_string(i));
    if ((next - next.transpose()).norm() > 1e-8 * scale)
      fail(ErrorCode::NumericalBlowup, "Riccati iterate lost symmetry at step " +
                                           std::to_string(i));
    P = symmetrize(next);
    traj.push_back(P);
  }
  return traj;
}

double spectrum_lower_bound(const DichotomySplit& split) {
  if (!split.period) return 0.0;
  double sum = 0.0;
  for (double m : split.multiplier_moduli)
    if (m > 1.0) sum += std::log(m) / *split.period;
  return sum;
}

RateReport ltv_rate_report(const LtvSystemSpec& spec, int horizon, double epsilon) {
  if (horizon < 1) fail(ErrorCode::InvalidArgument, "horizon must be at least 1");
  if (epsilon < 0.0) fail(ErrorCode::InvalidArgument, "epsilon must be non-negative");
  const bool ctrl = spec.mode == LoopMode::control;
  const double eps = ctrl ? 0.0 : epsilon;
  DichotomySplit split = dichotomy_split(spec, horizon + 1);
  const int u = split.unstable_dim;
  std::optional<int> period = common_period({&spec.A, &spec.B, &spec.C});
  if (split.source == "declared" && !split.period) period.reset();
  const int p = period.value_or(1);

  RateReport r;
  r.horizon = horizon;
  r.route = ctrl ? "riccati_control" : "riccati_filtering";
  MmseSequence seq = riccati_mmse(spec, horizon, eps);
  r.per_step_pmmse = seq.pmmse;
  r.per_step_cmmse = seq.cmmse;
  r.stderr_pmmse.assign(seq.pmmse.size(), 0.0);
  r.stderr_cmmse.assign(seq.cmmse.size(), 0.0);
  r.fill_bounds(p);
  r.diagnostics["info_rate"] = cesaro(seq.info, p).trailing;

  std::vector<Mat> Au(split.A_u.begin(), split.A_u.begin() + horizon + 1);
  TransitionRate tr = transition_logdet_rate(Au, horizon + 1, period);
  r.rate_exact = tr.rate;
  r.diagnostics["bode_full_window"] = tr.rate_full;
  r.diagnostics["bode_limsup"] = tr.rate_limsup;
  r.diagnostics["unstable_dim"] = u;
  r.diagnostics["split_max_residual"] = split.max_residual;
  r.diagnostics["split_max_condition"] = split.max_condition;
  if (period) r.diagnostics["period"] = *period;

  if (u > 0) {
    Mat P0 = positive_definite_or_identity(antistable_block(split.T[0], spec.prior(), u));
    std::vector<Mat> traj = rde_antistable_trajectory(split.A_u, split.C_u, P0, horizon);
    std::vector<double> half_terms;
    double sum_terms = 0.0;
    for (int i = 0; i <= horizon; ++i) {
      const Mat& C = split.C_u[static_cast<std::size_t>(i)];
      double t = logdet_spd(C * traj[static_cast<std::size_t>(i)] * C.transpose() +
                            Mat::Identity(C.rows(), C.rows()));
      sum_terms += t;
      half_terms.push_back(0.5 * t);
    }
    double first = logdet_spd(traj.front());
    double last = logdet_spd(traj.back());
    r.boundary_terms["logdet_initial"] = first;
    r.boundary_terms["logdet_final"] = last;
    r.boundary_terms["telescoping_residual"] =
        std::abs(tr.accumulator.log_det_running - 0.5 * (sum_terms + last - first));
    r.diagnostics["rde_rate_steady"] = cesaro(half_terms, p).trailing;
    r.diagnostics["rde_rate_telescoped"] = 0.5 * (sum_terms + last - first) / (horizon + 1);
  } else {
    r.boundary_terms["logdet_initial"] = 0.0;
    r.boundary_terms["logdet_final"] = 0.0;
    r.boundary_terms["telescoping_residual"] = 0.0;
    r.diagnostics["rde_rate_steady"] = 0.0;
    r.diagnostics["rde_rate_telescoped"] = 0.0;
  }
  if (split.period) r.diagnostics["clb_spectrum"] = spectrum_lower_bound(split);

  // Capacity of the realized input (control) or output (stable filtering) covariances.
  if (ctrl || u == 0) {
    std::vector<Mat> covs;
    Mat Sx = spec.prior();
    bool finite = true;
    for (int i = 0; i <= horizon && finite; ++i) {
      Mat A = spec.A.at(i), B = spec.B.at(i), C = spec.C.at(i);
      covs.push_back(symmetrize(C * Sx * C.transpose()));
      Mat F = ctrl ? Mat(A + B * C) : A;
      double w = ctrl ? 1.0 : eps * eps;
      Sx = symmetrize(F * Sx * F.transpose() + w * B * B.transpose());
      finite = Sx.allFinite() && Sx.norm() < 1e200;
    }
    if (finite) r.capacity = capacity_with_power_limits(covs, horizon);
  }
  return r;
}

VanishingNoiseDiagnostics vanishing_noise_structure(const LtvSystemSpec& spec,
                                                    const std::vector<double>& epsilons,
                                                    int horizon) {
  if (spec.mode != LoopMode::filtering)
    fail(ErrorCode::ModeMismatch, "vanishing-noise structure needs a filtering spec");
  if (epsilons.empty()) fail(ErrorCode::InvalidArgument, "need at least one epsilon");
  for (std::size_t i = 0; i < epsilons.size(); ++i) {
    if (!(epsilons[i] > 0.0)) fail(ErrorCode::InvalidArgument, "epsilons must be positive");
    if (i > 0 && !(epsilons[i] < epsilons[i - 1]))
      fail(ErrorCode::InvalidArgument, "epsilons must be strictly decreasing");
  }
  if (horizon < 1) fail(ErrorCode::InvalidArgument, "horizon must be at least 1");
  DichotomySplit split = dichotomy_split(spec, horizon + 1);
  const int u = split.unstable_dim;
  const Eigen::Index n = spec.state_dim(), s = n - u;
  VanishingNoiseDiagnostics d;
  d.unstable_dim = u;

  Mat P0 = positive_definite_or_identity(antistable_block(split.T[0], spec.prior(), u));
  if (u > 0) d.antistable_limit = rde_antistable_trajectory(split.A_u, split.C_u, P0, horizon).back();
  else d.antistable_limit = Mat(0, 0);

  const Mat& Tn = split.T.back();
  std::vector<Mat> Puu;
  std::vector<double> eps_ok, stable, cross_eps, cross;
  for (double eps : epsilons) {
    MmseSequence seq = riccati_mmse(spec, horizon, eps);
    Mat P = symmetrize(Tn * seq.final_prior * Tn.transpose());
    VanishingNoiseLevel lv;
    lv.epsilon = eps;
    lv.stable_norm = s > 0 ? P.topLeftCorner(s, s).norm() : 0.0;
    lv.cross_norm = (s > 0 && u > 0) ? P.topRightCorner(s, u).norm() : 0.0;
    Mat pu = P.bottomRightCorner(u, u);
    lv.antistable_norm = u > 0 ? pu.norm() : 0.0;
    lv.antistable_distance = u > 0 ? (pu - d.antistable_limit).norm() : 0.0;
    Puu.push_back(pu);
    if (lv.stable_norm > 0.0) {
      eps_ok.push_back(eps);
      stable.push_back(lv.stable_norm);
    }
    if (lv.cross_norm > 0.0) {
      cross_eps.push_back(eps);
      cross.push_back(lv.cross_norm);
    }
    d.levels.push_back(lv);
  }
  if (eps_ok.size() >= 2) d.stable_slope = loglog_slope(eps_ok, stable);
  if (cross.size() >= 2) d.cross_slope = loglog_slope(cross_eps, cross);
  const std::size_t k = Puu.size();
  if (k >= 2 && u > 0) {
    double e1 = epsilons[k - 2] * epsilons[k - 2], e2 = epsilons[k - 1] * epsilons[k - 1];
    Mat ext = (e1 * Puu[k - 1] - e2 * Puu[k - 2]) / (e1 - e2);
    d.antistable_extrapolated = ext;
    d.extrapolated_distance = (ext - d.antistable_limit).norm();
  }
  return d;
}

}  // namespace imse
