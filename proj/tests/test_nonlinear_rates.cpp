#include <algorithm>
#include <cmath>

#include "imse/lti_rates.hpp"
#include "imse/nonlinear_rates.hpp"
#include "support.hpp"

using namespace imse;
using testing::scalar;

namespace {

Vec v1(double x) { return Vec::Constant(1, x); }

LtiSystemSpec scalar_system(double a, double b, double c, LoopMode mode) {
  LtiSystemSpec s;
  s.A = scalar(a);
  s.B = scalar(b);
  s.C = scalar(c);
  s.mode = mode;
  return s;
}

NonlinearPlantSpec cubic_clipped_control() {
  NonlinearPlantSpec s;
  s.mode = LoopMode::control;
  s.f = [](int, const Vec& x) -> Vec {
    return (0.9 * x.array() + 0.1 * x.array().cube()).cwiseMax(-5.0).cwiseMin(5.0).matrix();
  };
  s.b = [](int, const Vec&) -> Mat { return scalar(1.0); };
  s.h = [](int, const Vec& x) -> Vec { return x; };
  s.g = [](int, const Vec& y) -> Vec { return -0.8 * y; };
  s.g_invertible = true;
  s.x0_sampler = [](Rng& rng) { return rng.normal_vec(1); };
  return s;
}

NonlinearPlantSpec tanh_control() {
  NonlinearPlantSpec s;
  s.mode = LoopMode::control;
  s.state_dim = 2;
  s.obs_dim = 2;
  s.f = [](int, const Vec& x) -> Vec {
    Vec out(2);
    out << 1.6 * x(0) + 0.05 * std::tanh(x(1)), 0.4 * x(1) + 0.3 * x(0);
    return out;
  };
  s.b = [](int, const Vec& x) -> Mat {
    Mat B(2, 1);
    B << 1.0, 0.2 * std::cos(x(0));
    return B;
  };
  s.h = [](int, const Vec& x) -> Vec { return x; };
  s.g = [](int, const Vec& y) -> Vec { return Vec::Constant(1, -1.3 * y(0) - 0.1 * y(1)); };
  s.x0_sampler = [](Rng& rng) { return rng.normal_vec(2); };
  return s;
}

double weighted_mean(const ParticleEnsemble& e) { return e.weights().dot(e.states.col(0)); }

double weighted_var(const ParticleEnsemble& e) {
  double m = weighted_mean(e);
  return e.weights().dot((e.states.col(0).array() - m).square().matrix());
}

Mat gaussian_states(int n, std::uint64_t seed) {
  Rng rng(seed, 0, 0);
  Mat s(n, 1);
  for (int k = 0; k < n; ++k) s(k, 0) = rng.normal();
  return s;
}

}  // namespace

TEST_CASE("linear decoupling is the plain transition") {
  auto spec = linear_as_nonlinear(scalar_system(2.0, 1.0, -1.8, LoopMode::control));
  auto m = decouple_feedback_noise(spec);
  for (double x : {-1.3, 0.0, 2.7})
    for (double e : {-0.4, 1.1}) CHECK(m.transition(3, v1(x), v1(e))(0) == 2.0 * x + e);
}

TEST_CASE("decoupled transition of a clipped cubic plant") {
  auto spec = cubic_clipped_control();
  auto m = decouple_feedback_noise(spec);
  Vec x = v1(1.0), e = v1(0.5);
  double expected = m.f_bar(0, x)(0) + 1.0 * (0.5 - m.u(0, x)(0));
  CHECK(m.transition(0, x, e)(0) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(m.transition(0, x, e)(0) == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("decoupled model replays plant trajectories exactly") {
  for (auto spec : {cubic_clipped_control(), tanh_control(),
                    linear_as_nonlinear(scalar_system(2.0, 1.0, -1.8, LoopMode::control))}) {
    auto m = decouple_feedback_noise(spec);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng rng(seed, streams::plant, 0);
      PlantTrajectory tr = simulate_plant(spec, 100, rng);
      double worst = 0.0;
      for (int i = 0; i < 100; ++i) {
        Vec next = m.transition(i, tr.states[i], tr.observations[i]);
        worst = std::max(worst, (next - tr.states[i + 1]).cwiseAbs().maxCoeff());
        Vec e = m.u(i, tr.states[i]) + tr.noise[i];
        worst = std::max(worst, (e - tr.observations[i]).cwiseAbs().maxCoeff());
      }
      CHECK(worst == 0.0);
    }
  }
}

TEST_CASE("decoupling needs a control plant") {
  auto spec = linear_as_nonlinear(scalar_system(2.0, 1.0, 1.0, LoopMode::filtering));
  CHECK_CODE(decouple_feedback_noise(spec), ErrorCode::ModeMismatch);
}

TEST_CASE("time update") {
  Rng rng(1, 0, 0);
  ParticleEnsemble e = make_ensemble(gaussian_states(500, 3), 4);
  auto same = bayes_time_update(e, [](int, const Vec& x, Rng&) { return x; }, rng);
  CHECK(same.states == e.states);
  CHECK(same.log_weights == e.log_weights);
  CHECK(same.step == 5);
  auto twice = bayes_time_update(e, [](int, const Vec& x, Rng&) -> Vec { return 2.0 * x; }, rng);
  CHECK(twice.states == (2.0 * e.states).eval());
  CHECK_CODE(bayes_time_update(e, [](int, const Vec& x, Rng&) -> Vec { return x / 0.0; }, rng),
             ErrorCode::NonFiniteState);
}

TEST_CASE("time update tracks the Kalman prediction") {
  const int N = 10000;
  auto spec = linear_as_nonlinear(scalar_system(0.8, 1.0, 1.0, LoopMode::filtering), 0.5);
  Rng rng(2, 0, 0);
  auto prior = bayes_time_update(make_ensemble(gaussian_states(N, 4)), filtering_kernel(spec), rng);
  const double var = 0.64 + 0.25, tol = 4.0 / std::sqrt(N);
  CHECK(std::abs(weighted_mean(prior)) < tol * std::sqrt(var));
  CHECK(std::abs(weighted_var(prior) / var - 1.0) < tol);
}

TEST_CASE("measurement update") {
  Rng rng(3, 0, 0);
  ParticleEnsemble e = make_ensemble(gaussian_states(1000, 5));
  MeasurementOptions keep;
  keep.resample = false;
  auto flat = bayes_measurement_update(e, v1(0.0), [](int, const Vec&) { return v1(0.0); }, rng, keep);
  CHECK((flat.log_weights - e.log_weights).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(flat.ess == doctest::Approx(1000.0));

  CHECK_CODE(bayes_measurement_update(e, v1(1e3), [](int, const Vec& x) { return x; }, rng),
             ErrorCode::DegenerateWeights);

  const int N = 10000;
  auto post = bayes_measurement_update(make_ensemble(gaussian_states(N, 6)), v1(0.7),
                                       [](int, const Vec& x) { return x; }, rng, keep);
  const double tol = 4.0 / std::sqrt(N);
  CHECK(std::abs(weighted_mean(post) / 0.35 - 1.0) < tol);
  CHECK(std::abs(weighted_var(post) / 0.5 - 1.0) < tol);
  CHECK(std::abs(post.weights().sum() - 1.0) < 1e-9);
  CHECK(post.ess >= 1.0);
  CHECK(post.ess <= N);
}

TEST_CASE("resampling keeps the weights normalized") {
  Rng rng(4, 0, 0);
  ParticleEnsemble e = make_ensemble(gaussian_states(2000, 7));
  auto post = bayes_measurement_update(e, v1(2.5), [](int, const Vec& x) { return 3.0 * x; }, rng);
  CHECK(post.ess == doctest::Approx(2000.0));
  CHECK(std::abs(post.weights().sum() - 1.0) < 1e-9);
}

TEST_CASE("normal correlation MMSE") {
  Mat same = Mat::Constant(10, 1, 0.3);
  CHECK(normal_correlation_mmse(make_ensemble(same), [](int, const Vec& x) { return x; }) == 0.0);
  Mat two(2, 1);
  two << 0.0, 2.0;
  CHECK(normal_correlation_mmse(make_ensemble(two), [](int, const Vec& x) { return x; }) ==
        doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("particle filter matches the steady Kalman variance") {
  const int N = 10000, n = 40;
  auto lti = scalar_system(0.8, 1.0, 1.0, LoopMode::filtering);
  auto spec = linear_as_nonlinear(lti, 1.0);
  MmseSequence k = riccati_mmse(ltv_from_lti(lti), n, 1.0);
  Rng plant(5, streams::plant, 0), prng(5, streams::particle, 0);
  auto tr = simulate_plant(spec, n, plant);
  auto f = run_particle_filter(spec, tr.observations, N, prng);
  double p = 0.0, c = 0.0;
  for (int i = n / 2; i <= n; ++i) {
    p += f.pmmse[i] / k.pmmse[i];
    c += f.cmmse[i] / k.cmmse[i];
  }
  const double steps = n / 2 + 1, tol = 4.0 / std::sqrt(N);
  CHECK(std::abs(p / steps - 1.0) < tol);
  CHECK(std::abs(c / steps - 1.0) < tol);
}

TEST_CASE("particle error shrinks like N^-1/2") {
  auto lti = scalar_system(0.8, 1.0, 1.0, LoopMode::filtering);
  auto spec = linear_as_nonlinear(lti, 1.0);
  const int n = 10, trials = 30;
  MmseSequence k = riccati_mmse(ltv_from_lti(lti), n, 1.0);
  auto rms_error = [&](int N) {
    double ss = 0.0;
    int count = 0;
    for (int t = 0; t < trials; ++t) {
      Rng plant(9, streams::plant, t), prng(9, streams::particle, t);
      auto f = run_particle_filter(spec, simulate_plant(spec, n, plant).observations, N, prng);
      for (int i = 1; i <= n; ++i) {
        ss += std::pow(f.cmmse[i] - k.cmmse[i], 2) + std::pow(f.pmmse[i] - k.pmmse[i], 2);
        count += 2;
      }
    }
    return std::sqrt(ss / count);
  };
  double ratio = rms_error(1000) / rms_error(10000);
  CHECK(ratio >= 2.0);
  CHECK(ratio <= 5.0);
}

TEST_CASE("grid reference agrees with the particle filter") {
  NonlinearPlantSpec s;
  s.mode = LoopMode::filtering;
  s.epsilon = 0.5;
  s.f = [](int, const Vec& x) -> Vec { return 0.9 * x; };
  s.b = [](int, const Vec&) -> Mat { return scalar(1.0); };
  s.h = [](int, const Vec& x) -> Vec { return (x.array() + 0.1 * x.array().cube()).matrix(); };
  s.x0_sampler = [](Rng& rng) { return rng.normal_vec(1); };
  const int n = 15, paths = 8;
  double grid_sum = 0.0, pf_sum = 0.0;
  for (int t = 0; t < paths; ++t) {
    Rng plant(12, streams::plant, t), prng(12, streams::particle, t);
    auto obs = simulate_plant(s, n, plant).observations;
    auto g = grid_filter_reference(s, obs, 1201, -6.0, 6.0);
    auto p = run_particle_filter(s, obs, 20000, prng);
    for (int i = 0; i <= n; ++i) {
      grid_sum += g.cmmse[i] + g.pmmse[i];
      pf_sum += p.cmmse[i] + p.pmmse[i];
    }
  }
  CHECK(std::abs(pf_sum / grid_sum - 1.0) < 0.01);
}

TEST_CASE("stable plant under zero control carries no information") {
  NonlinearPlantSpec s;
  s.mode = LoopMode::control;
  s.f = [](int, const Vec& x) -> Vec { return 0.5 * x; };
  s.b = [](int, const Vec&) -> Mat { return scalar(1.0); };
  s.h = [](int, const Vec& x) -> Vec { return x; };
  s.g = [](int, const Vec&) -> Vec { return Vec::Zero(1); };
  s.x0_sampler = [](Rng& rng) { return rng.normal_vec(1); };
  RateReport r = nonlinear_rate_report(s, 20, 200, 10, 4);
  CHECK(r.rate_lower == 0.0);
  CHECK(r.rate_upper == 0.0);
  CHECK(!r.rate_exact);
  CHECK(r.route == "density");
}

TEST_CASE("tanh-perturbed loop keeps the ordering") {
  NonlinearPlantSpec s;
  s.mode = LoopMode::control;
  s.f = [](int, const Vec& x) -> Vec { return (2.0 * x.array() + 0.05 * x.array().tanh()).matrix(); };
  s.b = [](int, const Vec&) -> Mat { return scalar(1.0); };
  s.h = [](int, const Vec& x) -> Vec { return x; };
  s.g = [](int, const Vec& y) -> Vec { return -1.8 * y; };
  s.g_invertible = true;
  s.x0_sampler = [](Rng& rng) { return rng.normal_vec(1); };
  RateReport r = nonlinear_rate_report(s, 25, 1000, 20, 6);
  CHECK(r.route == "decoupled_feedback");
  CHECK(r.diagnostics.at("ordering_violations") == 0.0);
  for (std::size_t i = 0; i < r.per_step_cmmse.size(); ++i)
    CHECK(r.per_step_cmmse[i] <=
          r.per_step_pmmse[i] + 3.0 * std::hypot(r.stderr_cmmse[i], r.stderr_pmmse[i]));
  CHECK(r.rate_lower <= r.rate_upper);
}

TEST_CASE("linear loop wrapped as callbacks approaches the Riccati values") {
  auto spec = linear_as_nonlinear(scalar_system(2.0, 1.0, -1.8, LoopMode::control));
  RateReport r = nonlinear_rate_report(spec, 25, 2000, 40, 8);
  CHECK(r.per_step_pmmse.back() == doctest::Approx(3.0).epsilon(0.1));
  CHECK(r.per_step_cmmse.back() == doctest::Approx(0.75).epsilon(0.1));
  CHECK(r.rate_lower == doctest::Approx(0.375).epsilon(0.05));
  CHECK(r.rate_upper == doctest::Approx(1.5).epsilon(0.05));
}

TEST_CASE("reports do not depend on the thread count") {
  auto spec = tanh_control();
  NonlinearOptions one, eight;
  one.threads = 1;
  eight.threads = 8;
  RateReport a = nonlinear_rate_report(spec, 15, 300, 16, 10, one);
  RateReport b = nonlinear_rate_report(spec, 15, 300, 16, 10, eight);
  CHECK(a.per_step_cmmse == b.per_step_cmmse);
  CHECK(a.per_step_pmmse == b.per_step_pmmse);
  CHECK(a.stderr_pmmse == b.stderr_pmmse);
}

TEST_CASE("spec validation") {
  auto spec = cubic_clipped_control();
  int calls = 0;
  auto bad = spec;
  bad.f = [&calls](int, const Vec& x) -> Vec { return x * static_cast<double>(++calls); };
  CHECK_CODE(validate_nonlinear(bad), ErrorCode::CallbackFailure);
  bad = spec;
  bad.h = [](int, const Vec&) -> Vec { return Vec::Zero(3); };
  CHECK_CODE(validate_nonlinear(bad), ErrorCode::DimensionMismatch);
  bad = spec;
  bad.g = nullptr;
  CHECK_CODE(validate_nonlinear(bad), ErrorCode::ModeMismatch);
  bad = spec;
  bad.f = [](int, const Vec&) -> Vec { throw std::runtime_error("boom"); };
  CHECK_CODE(validate_nonlinear(bad), ErrorCode::CallbackFailure);
  CHECK_CODE(nonlinear_rate_report(spec, 10, 50, 10, 1), ErrorCode::InvalidArgument);
  CHECK_CODE(nonlinear_rate_report(spec, 10, 100, 5, 1), ErrorCode::InvalidArgument);
  auto capped = spec;
  capped.power_cap = 1e-6;
  CHECK_CODE(nonlinear_rate_report(capped, 10, 100, 10, 1), ErrorCode::PowerCapExceeded);
}
