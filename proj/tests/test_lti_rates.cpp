#include <cmath>
#include <random>

#include "imse/gaussian_info.hpp"
#include "imse/lti_rates.hpp"
#include "support.hpp"

using namespace imse;
using testing::scalar;

namespace {

Mat diag(std::initializer_list<double> v) {
  Vec d(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) d(i++) = x;
  return d.asDiagonal();
}

LtiSystemSpec scalar_system(double a, double b, double c, LoopMode mode) {
  LtiSystemSpec s;
  s.A = scalar(a);
  s.B = scalar(b);
  s.C = scalar(c);
  s.mode = mode;
  return s;
}

Mat block_offdiag(const Mat& M, int leading) {
  Mat out = M;
  const auto n = M.rows();
  out.topLeftCorner(leading, leading).setZero();
  out.bottomRightCorner(n - leading, n - leading).setZero();
  return out;
}

}  // namespace

TEST_CASE("unstable spectrum rate") {
  CHECK(unstable_spectrum_rate(diag({0.5, 0.9})) == 0.0);
  CHECK(unstable_spectrum_rate(diag({2.0, 0.5})) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  Mat rot(2, 2);
  const double th = 0.7;
  rot << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
  CHECK(unstable_spectrum_rate(1.5 * rot) ==
        doctest::Approx(0.8109302162163288).epsilon(1e-12));
  CHECK_CODE(unstable_spectrum_rate(diag({1.0 + 1e-10, 0.5})), ErrorCode::MarginalEigenvalue);
}

TEST_CASE("modal split of a coupled pair") {
  LtiSystemSpec s;
  s.A.resize(2, 2);
  s.A << 2, 1, 0, 0.5;
  s.B = Mat::Identity(2, 2);
  s.C = Mat::Identity(2, 2);
  s.mode = LoopMode::filtering;
  ModalSplit m = modal_decompose(s);
  REQUIRE(m.unstable_dim == 1);
  CHECK(m.A_u(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(m.A_s(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(m.offblock_residual < 1e-12);
  // The stable coordinate direction is the eigenvector (-2/3, 1) of A.
  CHECK(m.T_inv(0, 0) / m.T_inv(1, 0) == doctest::Approx(-2.0 / 3.0).epsilon(1e-12));
  Mat S11 = scalar(2.0), S22 = scalar(0.5), C = scalar(-1.0);
  CHECK(solve_sylvester(S11, S22, C)(0, 0) == doctest::Approx(-2.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("modal split edge cases") {
  LtiSystemSpec s;
  s.A = diag({2.0, 0.5});
  s.B = Mat::Identity(2, 2);
  s.C = Mat::Identity(2, 2);
  s.mode = LoopMode::filtering;
  ModalSplit m = modal_decompose(s);
  CHECK(m.A_u(0, 0) == doctest::Approx(2.0));
  CHECK(m.A_s(0, 0) == doctest::Approx(0.5));
  CHECK(std::abs(std::abs(m.T(0, 1)) - 1.0) < 1e-12);
  s.A = diag({0.3, -0.6});
  ModalSplit st = modal_decompose(s);
  CHECK(st.unstable_dim == 0);
  CHECK(st.A_u.size() == 0);
}

TEST_CASE("modal split residual on random matrices") {
  std::mt19937_64 gen(11);
  for (int t = 0; t < 50; ++t) {
    LtiSystemSpec s = testing::random_filtering_system(gen, 4, 2.0);
    ModalSplit m = modal_decompose(s);
    Mat D = m.T * s.A * m.T_inv;
    const int ls = static_cast<int>(s.A.rows()) - m.unstable_dim;
    CHECK(block_offdiag(D, ls).norm() < 1e-9 * s.A.norm());
    for (auto ev : eigenvalues(m.A_u)) CHECK(std::abs(ev) > 1.0);
    for (auto ev : eigenvalues(m.A_s)) CHECK(std::abs(ev) < 1.0);
  }
}

TEST_CASE("antistable DARE fixed points") {
  DareSolution a = solve_dare_antistable(scalar(2.0), scalar(1.0));
  CHECK(a.P_minus(0, 0) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(a.P(0, 0) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(a.residual < 1e-12);

  DareSolution b = solve_dare_antistable(scalar(2.0), scalar(0.6));
  CHECK(b.P_minus(0, 0) == doctest::Approx(3.0 / 0.36).epsilon(1e-12));
  CHECK(dare_rate(b, scalar(0.6)) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  DareSolution c = solve_dare_antistable(diag({2.0, 3.0}), Mat::Identity(2, 2));
  CHECK((c.P_minus - diag({3.0, 8.0})).norm() < 1e-10);
  Eigen::SelfAdjointEigenSolver<Mat> es(c.P_minus - c.P);
  CHECK(es.eigenvalues().minCoeff() >= -1e-12);
}

TEST_CASE("DARE rejects undetectable pairs") {
  Mat C(1, 2);
  C << 1, 0;
  CHECK_THROWS_AS(solve_dare_antistable(diag({2.0, 3.0}), C), Error);
}

TEST_CASE("scalar control report") {
  RateReport r = lti_rate_report(scalar_system(2.0, 1.0, -1.8, LoopMode::control), 500);
  REQUIRE(r.rate_exact);
  CHECK(*r.rate_exact == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(r.per_step_pmmse.back() == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(r.per_step_cmmse.back() == doctest::Approx(0.75).epsilon(1e-9));
  CHECK(r.rate_lower == doctest::Approx(0.375).epsilon(1e-9));
  CHECK(r.rate_upper == doctest::Approx(1.5).epsilon(1e-9));
  CHECK(r.rate_lower <= *r.rate_exact);
  CHECK(*r.rate_exact <= r.rate_upper);
  CHECK(r.diagnostics.at("dare_rate") == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(r.diagnostics.at("info_rate") == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  CHECK(r.boundary_terms.at("telescoping_residual") < 1e-8);
  CHECK(r.units == "nats/step");
}

TEST_CASE("stable filtering has rate zero") {
  LtiSystemSpec s;
  s.A = diag({0.5, -0.7});
  s.B = Mat::Identity(2, 2);
  s.C = Mat::Identity(2, 2);
  s.mode = LoopMode::filtering;
  RateReport r = lti_rate_report(s, 200, 0.0);
  CHECK(*r.rate_exact == 0.0);
  CHECK(r.per_step_pmmse.back() < 1e-20);
}

TEST_CASE("scalar filtering tends to the control values") {
  RateReport r = lti_rate_report(scalar_system(2.0, 1.0, 1.0, LoopMode::filtering), 400, 0.0);
  CHECK(r.per_step_pmmse.back() == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(r.per_step_cmmse.back() == doctest::Approx(0.75).epsilon(1e-9));
  CHECK(r.rate_lower <= *r.rate_exact);
  CHECK(*r.rate_exact <= r.rate_upper);
  RateReport small = lti_rate_report(scalar_system(2.0, 1.0, 1.0, LoopMode::filtering), 400, 1e-4);
  CHECK(small.per_step_pmmse.back() == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(r.diagnostics.at("eps_trend_gap") < 1e-6);
}

TEST_CASE("capacity formula") {
  CHECK(capacity_with_power_limits({scalar(1.0)}, 0) ==
        doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-15));
  std::vector<Mat> ones(10, scalar(1.0));
  CHECK(capacity_with_power_limits(ones, 9) == doctest::Approx(0.34657359027997264).epsilon(1e-14));
  std::vector<Mat> zeros(5, scalar(0.0));
  CHECK(capacity_with_power_limits(zeros, 4) == 0.0);
  std::vector<Mat> eye(3, Mat::Identity(2, 2));
  CHECK(capacity_with_power_limits(eye, 2) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK_CODE(capacity_with_power_limits({scalar(-1.0)}, 0), ErrorCode::NotPSD);
}

TEST_CASE("footnote identities of the scalar loop") {
  auto d = footnote_identity_checks(scalar_system(2.0, 1.0, -1.8, LoopMode::control));
  REQUIRE(d.eta.size() == 1);
  CHECK(d.eta[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(d.identity_a_residual < 1e-12);
  CHECK(d.inequality_b);
  CHECK(d.inequality_c);
  CHECK(d.causal_floor == doctest::Approx(0.5809402158035948).epsilon(1e-12));
  CHECK(d.steady_cmmse == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(d.causal_floor_respected);
  CHECK(d.trace_relation_residual < 1e-12);
}

TEST_CASE("Woodbury posterior relation") {
  std::mt19937_64 gen(5);
  for (int t = 0; t < 20; ++t) {
    Mat P = testing::random_spd(gen, 3, 0.1);
    Mat C = testing::gaussian_matrix(gen, 1 + t % 3, 3);
    CHECK(woodbury_posterior_residual(P, C) < 1e-12 * std::max(1.0, P.norm()));
  }
}

TEST_CASE("rates are invariant under a change of state coordinates") {
  std::mt19937_64 gen(8);
  for (int t = 0; t < 30; ++t) {
    LtiSystemSpec s = testing::random_control_system(gen);
    Mat T = testing::well_conditioned(gen, static_cast<int>(s.A.rows()));
    Mat Ti = T.inverse();
    LtiSystemSpec g = s;
    g.A = T * s.A * Ti;
    g.B = T * s.B;
    g.C = s.C * Ti;
    g.x0_cov = T * T.transpose();
    CHECK(std::abs(unstable_spectrum_rate(g.A) - unstable_spectrum_rate(s.A)) < 1e-9);
    ModalSplit ms = modal_decompose(g);
    DareSolution dare = solve_dare_antistable(ms.A_u, ms.C_u);
    CHECK(std::abs(dare_rate(dare, ms.C_u) - unstable_spectrum_rate(s.A)) < 1e-9);
  }
}

TEST_CASE("random instances satisfy the steady sandwich and identity") {
  std::mt19937_64 gen(21);
  for (int t = 0; t < 25; ++t) {
    LtiSystemSpec s = t % 2 ? testing::random_control_system(gen)
                            : testing::random_filtering_system(gen);
    RateReport r = lti_rate_report(s, 300, 0.0);
    double rate = *r.rate_exact;
    CHECK(std::abs(r.diagnostics.at("dare_rate") - rate) < 1e-9);
    CHECK(0.5 * r.diagnostics.at("steady_cmmse") <= rate + 1e-9);
    CHECK(0.5 * r.diagnostics.at("steady_pmmse") >= rate - 1e-9);
    auto d = footnote_identity_checks(s);
    CHECK(d.identity_a_residual < 1e-8);
  }
}

TEST_CASE("oracle agrees with the spectrum on the scalar loop") {
  auto s = scalar_system(2.0, 1.0, -1.8, LoopMode::control);
  CHECK(std::abs(oracle_information(s, 400).rate() - std::log(2.0)) < 2e-2);
}

TEST_CASE("realized input power feeds the capacity") {
  auto s = scalar_system(1.5, 1.0, -1.0, LoopMode::control);
  Mat Su = steady_input_covariance(s);
  // Sigma_X = 0.25 Sigma_X + 1 at the closed loop 0.5, so Sigma_U = 4/3.
  CHECK(Su(0, 0) == doctest::Approx(4.0 / 3.0).epsilon(1e-10));
  double cap = 0.5 * std::log(1.0 + Su(0, 0));
  CHECK(unstable_spectrum_rate(s.A) <= cap + 1e-9);
  auto covs = realized_input_covariances(s, 100);
  CHECK(covs.size() == 101);
  CHECK(covs.back()(0, 0) == doctest::Approx(4.0 / 3.0).epsilon(1e-9));
}
