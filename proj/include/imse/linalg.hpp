#pragma once

#include <Eigen/Dense>

namespace imse {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

Eigen::VectorXcd eigenvalues(const Mat& A);
double spectral_radius(const Mat& A);
Mat symmetrize(const Mat& P);

// Cholesky log-determinant. A jitter of jitter_frac * trace is tried once
// before giving up with SingularCovariance.
double logdet_spd(const Mat& S, double jitter_frac = 1e-12);

// log|det A| from an LU factorization.
double logabsdet(const Mat& A);

bool is_psd(const Mat& S, double rel_tol = 1e-10);
double condition_number(const Mat& A);

struct OrderedSchur {
  Mat Q;
  Mat S;
  int leading = 0;  // size of the leading block
  Eigen::VectorXcd eig;
};

// Real Schur form A = Q S Q^T with eigenvalues inside the unit circle first
// (stable_first) or outside first.
OrderedSchur ordered_schur(const Mat& A, bool stable_first);

// Solves S11 X - X S22 = C.
Mat solve_sylvester(const Mat& S11, const Mat& S22, const Mat& C);

// Orthonormal basis of range(V) (full column rank assumed), R diagonal > 0.
Mat orthonormal_basis(const Mat& V);

}  // namespace imse
