#include "imse/linalg.hpp"

#include <lapacke.h>

#include <cmath>
#include <string>

#include "imse/errors.hpp"

namespace imse {

Eigen::VectorXcd eigenvalues(const Mat& A) {
  if (A.size() == 0) return Eigen::VectorXcd();
  Eigen::EigenSolver<Mat> es(A, false);
  if (es.info() != Eigen::Success) fail(ErrorCode::NoConvergence, "eigenvalue solver failed");
  return es.eigenvalues();
}

double spectral_radius(const Mat& A) {
  if (A.size() == 0) return 0.0;
  return eigenvalues(A).cwiseAbs().maxCoeff();
}

Mat symmetrize(const Mat& P) { return 0.5 * (P + P.transpose()); }

double logdet_spd(const Mat& S, double jitter_frac) {
  if (S.rows() != S.cols()) fail(ErrorCode::DimensionMismatch, "logdet of non-square matrix");
  if (S.size() == 0) return 0.0;
  Eigen::LLT<Mat> llt(S);
  if (llt.info() != Eigen::Success) {
    double jitter = jitter_frac * std::abs(S.trace());
    Mat J = S;
    J.diagonal().array() += jitter;
    llt.compute(J);
    if (llt.info() != Eigen::Success)
      fail(ErrorCode::SingularCovariance, "covariance is not positive definite");
  }
  double ld = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  if (!std::isfinite(ld) || ld < std::log(1e-300))
    fail(ErrorCode::SingularCovariance, "determinant below 1e-300");
  return ld;
}

double logabsdet(const Mat& A) {
  if (A.size() == 0) return 0.0;
  Eigen::PartialPivLU<Mat> lu(A);
  return lu.matrixLU().diagonal().array().abs().log().sum();
}

bool is_psd(const Mat& S, double rel_tol) {
  if (S.size() == 0) return true;
  Mat sym = symmetrize(S);
  double scale = std::max(1.0, sym.cwiseAbs().maxCoeff());
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) return false;
  Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
  double top = std::max(0.0, es.eigenvalues().maxCoeff());
  return es.eigenvalues().minCoeff() >= -rel_tol * std::max(top, 1e-300);
}

double condition_number(const Mat& A) {
  if (A.size() == 0) return 1.0;
  Eigen::JacobiSVD<Mat> svd(A);
  const auto& s = svd.singularValues();
  double smin = s(s.size() - 1);
  return smin > 0.0 ? s(0) / smin : INFINITY;
}

namespace {
lapack_logical select_inside(const double* re, const double* im) {
  return std::hypot(*re, *im) < 1.0;
}
lapack_logical select_outside(const double* re, const double* im) {
  return std::hypot(*re, *im) > 1.0;
}
}  // namespace

OrderedSchur ordered_schur(const Mat& A, bool stable_first) {
  const lapack_int n = static_cast<lapack_int>(A.rows());
  OrderedSchur out;
  if (n == 0) return out;
  Mat S = A;
  Mat Q(n, n);
  Eigen::VectorXd wr(n), wi(n);
  lapack_int sdim = 0;
  lapack_int info = LAPACKE_dgees(LAPACK_COL_MAJOR, 'V', 'S',
                                  stable_first ? select_inside : select_outside, n, S.data(), n,
                                  &sdim, wr.data(), wi.data(), Q.data(), n);
  if (info != 0) fail(ErrorCode::NoConvergence, "dgees failed, info=" + std::to_string(info));
  out.Q = Q;
  out.S = S;
  out.leading = static_cast<int>(sdim);
  out.eig.resize(n);
  for (lapack_int i = 0; i < n; ++i) out.eig(i) = {wr(i), wi(i)};
  return out;
}

Mat solve_sylvester(const Mat& S11, const Mat& S22, const Mat& C) {
  const Eigen::Index p = S11.rows(), q = S22.rows();
  if (p == 0 || q == 0) return Mat::Zero(p, q);
  // vec(S11 X - X S22) = (I_q kron S11 - S22^T kron I_p) vec(X)
  Mat K = Mat::Zero(p * q, p * q);
  for (Eigen::Index j = 0; j < q; ++j) {
    K.block(j * p, j * p, p, p) += S11;
    for (Eigen::Index l = 0; l < q; ++l)
      K.block(j * p, l * p, p, p) -= S22(l, j) * Mat::Identity(p, p);
  }
  Vec c = Eigen::Map<const Vec>(C.data(), p * q);
  Eigen::FullPivLU<Mat> lu(K);
  if (!lu.isInvertible())
    fail(ErrorCode::IllConditionedTransform, "Sylvester operator is singular");
  Vec x = lu.solve(c);
  return Eigen::Map<Mat>(x.data(), p, q);
}

Mat orthonormal_basis(const Mat& V) {
  if (V.cols() == 0) return Mat(V.rows(), 0);
  Eigen::HouseholderQR<Mat> qr(V);
  Mat Q = qr.householderQ() * Mat::Identity(V.rows(), V.cols());
  Mat R = qr.matrixQR().topRows(V.cols()).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < V.cols(); ++j)
    if (R(j, j) < 0) Q.col(j) = -Q.col(j);
  return Q;
}

}  // namespace imse
