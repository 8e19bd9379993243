#pragma once

// Random LTI instances shared by the unit tests and the acceptance binary.

#include <cmath>
#include <random>

#include "imse/linalg.hpp"
#include "imse/system.hpp"

namespace testing {

inline imse::Mat gaussian_matrix(std::mt19937_64& gen, int r, int c) {
  std::normal_distribution<double> nd;
  imse::Mat M(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) M(i, j) = nd(gen);
  return M;
}

inline imse::Mat well_conditioned(std::mt19937_64& gen, int n) {
  for (;;) {
    imse::Mat T = imse::Mat::Identity(n, n) + 0.5 * gaussian_matrix(gen, n, n);
    if (imse::condition_number(T) < 20.0) return T;
  }
}

// Real matrix whose eigenvalue moduli lie in [0.2, 0.9] or [1.1, max_unstable].
inline imse::Mat random_dichotomic(std::mt19937_64& gen, int n, double max_unstable = 1.6) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto modulus = [&] {
    return u01(gen) < 0.5 ? 0.2 + 0.7 * u01(gen) : 1.1 + (max_unstable - 1.1) * u01(gen);
  };
  imse::Mat D = imse::Mat::Zero(n, n);
  int i = 0;
  while (i < n) {
    if (i + 1 < n && u01(gen) < 0.4) {
      double r = modulus(), th = 0.3 + 2.5 * u01(gen);
      D(i, i) = r * std::cos(th);
      D(i, i + 1) = -r * std::sin(th);
      D(i + 1, i) = r * std::sin(th);
      D(i + 1, i + 1) = r * std::cos(th);
      i += 2;
    } else {
      D(i, i) = (u01(gen) < 0.5 ? -1.0 : 1.0) * modulus();
      i += 1;
    }
  }
  imse::Mat T = well_conditioned(gen, n);
  return T * D * T.inverse();
}

// Infinite-horizon LQR gain with Q = I, R = I by value iteration.
inline imse::Mat lqr_gain(const imse::Mat& A, const imse::Mat& B) {
  const auto n = A.rows(), m = B.cols();
  imse::Mat P = imse::Mat::Identity(n, n);
  imse::Mat K;
  for (int it = 0; it < 5000; ++it) {
    imse::Mat S = imse::Mat::Identity(m, m) + B.transpose() * P * B;
    K = S.ldlt().solve(B.transpose() * P * A);
    imse::Mat next = imse::Mat::Identity(n, n) + A.transpose() * P * (A - B * K);
    next = 0.5 * (next + next.transpose());
    double d = (next - P).norm();
    P = next;
    if (d < 1e-13 * P.norm()) break;
  }
  return -K;
}

inline imse::LtiSystemSpec random_control_system(std::mt19937_64& gen, int max_dim = 4,
                                                 double max_unstable = 1.6) {
  std::uniform_int_distribution<int> dim(1, max_dim);
  for (;;) {
    int n = dim(gen);
    std::uniform_int_distribution<int> inputs(1, n);
    imse::LtiSystemSpec s;
    s.A = random_dichotomic(gen, n, max_unstable);
    s.B = gaussian_matrix(gen, n, inputs(gen));
    s.C = lqr_gain(s.A, s.B);
    s.mode = imse::LoopMode::control;
    if (imse::spectral_radius(s.closed_loop()) < 0.95) return s;
  }
}

inline imse::LtiSystemSpec random_filtering_system(std::mt19937_64& gen, int max_dim = 4,
                                                   double max_unstable = 1.6) {
  std::uniform_int_distribution<int> dim(1, max_dim);
  int n = dim(gen);
  std::uniform_int_distribution<int> outputs(1, n);
  imse::LtiSystemSpec s;
  s.A = random_dichotomic(gen, n, max_unstable);
  s.B = gaussian_matrix(gen, n, n);
  s.C = gaussian_matrix(gen, outputs(gen), n);
  s.mode = imse::LoopMode::filtering;
  return s;
}

}  // namespace testing
