#include "imse/nonlinear_rates.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "imse/errors.hpp"
#include "imse/parallel.hpp"

namespace imse {

namespace {

Vec call_state(const StateFn& fn, const char* name, int step, const Vec& x) {
  try {
    return fn(step, x);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorCode::CallbackFailure, std::string(name) + ": " + e.what());
  }
}

Mat call_gain(const GainFn& fn, int step, const Vec& x) {
  try {
    return fn(step, x);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorCode::CallbackFailure, std::string("b: ") + e.what());
  }
}

// Shared by the plant simulator and the decoupled transition so both round to
// the same bits.
Vec drift_plus_gain(const Vec& fx, const Mat& bx, const Vec& e) {
  Vec out = bx * e;
  out += fx;
  return out;
}

Mat cholesky_or_sqrt(const Mat& S) {
  Eigen::LLT<Mat> llt(S);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(S));
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

double log_sum_exp(const Vec& v) {
  double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

struct Moments {
  double mean = 0.0;
  double stderr_ = 0.0;
};

Moments moments(const std::vector<double>& x) {
  Moments m;
  if (x.empty()) return m;
  const double n = static_cast<double>(x.size());
  m.mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  if (x.size() > 1) {
    double ss = 0.0;
    for (double v : x) ss += (v - m.mean) * (v - m.mean);
    m.stderr_ = std::sqrt(ss / (n - 1.0) / n);
  }
  return m;
}

}  // namespace

void validate_nonlinear(const NonlinearPlantSpec& spec) {
  if (spec.state_dim < 1 || spec.obs_dim < 1)
    fail(ErrorCode::InvalidArgument, "state_dim and obs_dim must be positive");
  if (!spec.f || !spec.b || !spec.h || !spec.x0_sampler)
    fail(ErrorCode::InvalidArgument, "plant needs f, b, h and x0_sampler");
  if (spec.mode == LoopMode::control && !spec.g)
    fail(ErrorCode::ModeMismatch, "control mode needs a controller g");
  if (spec.mode == LoopMode::filtering && !(spec.epsilon >= 0.0))
    fail(ErrorCode::InvalidArgument, "epsilon must be non-negative");

  Rng r1(0, 0, 0), r2(0, 0, 0);
  Vec x, x_again;
  try {
    x = spec.x0_sampler(r1);
    x_again = spec.x0_sampler(r2);
  } catch (const std::exception& e) {
    fail(ErrorCode::CallbackFailure, std::string("x0_sampler: ") + e.what());
  }
  if (x.size() != spec.state_dim) fail(ErrorCode::DimensionMismatch, "x0_sampler output size");
  if (x != x_again) fail(ErrorCode::CallbackFailure, "x0_sampler is not a function of the RNG");

  auto same = [](const auto& a, const auto& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
  };
  for (int step = 0; step < 2; ++step) {
    Vec fx = call_state(spec.f, "f", step, x);
    if (!same(fx, call_state(spec.f, "f", step, x)))
      fail(ErrorCode::CallbackFailure, "f is not deterministic");
    if (fx.size() != spec.state_dim) fail(ErrorCode::DimensionMismatch, "f output size");
    Mat bx = call_gain(spec.b, step, x);
    if (!same(bx, call_gain(spec.b, step, x)))
      fail(ErrorCode::CallbackFailure, "b is not deterministic");
    if (bx.rows() != spec.state_dim) fail(ErrorCode::DimensionMismatch, "b must have state_dim rows");
    Vec hx = call_state(spec.h, "h", step, x);
    if (!same(hx, call_state(spec.h, "h", step, x)))
      fail(ErrorCode::CallbackFailure, "h is not deterministic");
    if (hx.size() != spec.obs_dim) fail(ErrorCode::DimensionMismatch, "h output size");
    if (spec.mode == LoopMode::control) {
      Vec u = call_state(spec.g, "g", step, hx);
      if (!same(u, call_state(spec.g, "g", step, hx)))
        fail(ErrorCode::CallbackFailure, "g is not deterministic");
      if (u.size() != bx.cols())
        fail(ErrorCode::DimensionMismatch, "g output size must match the columns of b");
    }
    x = fx;
  }
}

int signal_dim(const NonlinearPlantSpec& spec) {
  if (spec.mode == LoopMode::filtering) return spec.obs_dim;
  Rng r(0, 0, 0);
  Vec x = spec.x0_sampler(r);
  return static_cast<int>(call_state(spec.g, "g", 0, call_state(spec.h, "h", 0, x)).size());
}

DecoupledModel decouple_feedback_noise(const NonlinearPlantSpec& spec) {
  if (spec.mode != LoopMode::control || !spec.g)
    fail(ErrorCode::ModeMismatch, "feedback decoupling needs a control-mode plant with g");
  DecoupledModel m;
  StateFn f = spec.f, h = spec.h, g = spec.g;
  GainFn b = spec.b;
  m.u = [h, g](int i, const Vec& x) -> Vec {
    return call_state(g, "g", i, call_state(h, "h", i, x));
  };
  StateFn u = m.u;
  m.f_bar = [f, b, u](int i, const Vec& x) -> Vec {
    return drift_plus_gain(call_state(f, "f", i, x), call_gain(b, i, x), u(i, x));
  };
  // f_bar(x) + b(x)(e - U(x)) collapses to f(x) + b(x) e; evaluating it in that
  // form keeps the transformed model bit-identical to the plant.
  m.transition = [f, b](int i, const Vec& x, const Vec& e) -> Vec {
    return drift_plus_gain(call_state(f, "f", i, x), call_gain(b, i, x), e);
  };
  return m;
}

Vec ParticleEnsemble::weights() const {
  return log_weights.array().exp().matrix();
}

void ParticleEnsemble::normalize() {
  double lse = log_sum_exp(log_weights);
  if (!std::isfinite(lse)) fail(ErrorCode::DegenerateWeights, "all particle weights vanished");
  log_weights.array() -= lse;
  ess = 1.0 / weights().squaredNorm();
}

ParticleEnsemble make_ensemble(const Mat& states, int step) {
  ParticleEnsemble e;
  e.states = states;
  e.step = step;
  e.log_weights = Vec::Constant(states.rows(), -std::log(static_cast<double>(states.rows())));
  e.ess = static_cast<double>(states.rows());
  return e;
}

TransitionKernel filtering_kernel(const NonlinearPlantSpec& spec) {
  StateFn f = spec.f;
  GainFn b = spec.b;
  double eps = spec.epsilon;
  return [f, b, eps](int i, const Vec& x, Rng& rng) -> Vec {
    Vec fx = call_state(f, "f", i, x);
    if (eps == 0.0) return fx;
    Mat bx = call_gain(b, i, x);
    return drift_plus_gain(fx, eps * bx, rng.normal_vec(bx.cols()));
  };
}

TransitionKernel control_kernel(const DecoupledModel& model, const Vec& error_signal) {
  auto tr = model.transition;
  Vec e = error_signal;
  return [tr, e](int i, const Vec& x, Rng&) -> Vec { return tr(i, x, e); };
}

ParticleEnsemble bayes_time_update(const ParticleEnsemble& posterior, const TransitionKernel& kernel,
                                   Rng& rng) {
  ParticleEnsemble prior = posterior;
  for (int k = 0; k < posterior.size(); ++k) {
    Vec x = kernel(posterior.step, posterior.states.row(k).transpose(), rng);
    if (x.size() != posterior.states.cols())
      fail(ErrorCode::DimensionMismatch, "transition changed the state dimension");
    if (!x.allFinite())
      fail(ErrorCode::NonFiniteState,
           "non-finite particle state at step " + std::to_string(posterior.step + 1));
    prior.states.row(k) = x.transpose();
  }
  prior.step = posterior.step + 1;
  return prior;
}

void resample_if_needed(ParticleEnsemble& ens, Rng& rng, double rejuvenation) {
  const int N = ens.size();
  if (ens.ess >= 0.5 * N) return;
  Vec w = ens.weights();
  const Eigen::Index d = ens.states.cols();
  Vec mean = ens.states.transpose() * w;
  Mat centered = ens.states.rowwise() - mean.transpose();
  Mat cov = centered.transpose() * w.asDiagonal() * centered;

  Mat next(N, d);
  double u0 = rng.uniform();
  double c = w(0);
  int j = 0;
  for (int k = 0; k < N; ++k) {
    double u = (u0 + k) / N;
    while (u > c && j < N - 1) c += w(++j);
    next.row(k) = ens.states.row(j);
  }
  if (rejuvenation > 0.0 && rejuvenation < 1.0) {
    // Liu-West: shrink toward the mean and add kernel noise, preserving the
    // first two moments.
    const double a = rejuvenation, hh = std::sqrt(1.0 - a * a);
    Mat L = cholesky_or_sqrt(cov);
    for (int k = 0; k < N; ++k) {
      Vec x = a * next.row(k).transpose() + (1.0 - a) * mean + hh * (L * rng.normal_vec(d));
      next.row(k) = x.transpose();
    }
  }
  ens.states = std::move(next);
  ens.log_weights.setConstant(-std::log(static_cast<double>(N)));
  ens.ess = N;
}

ParticleEnsemble bayes_measurement_update(const ParticleEnsemble& prior, const Vec& observation,
                                          const StateFn& obs_fn, Rng& rng,
                                          const MeasurementOptions& options) {
  ParticleEnsemble post = prior;
  const int N = prior.size();
  double best = -INFINITY;
  for (int k = 0; k < N; ++k) {
    Vec z = call_state(obs_fn, "observation", prior.step, prior.states.row(k).transpose());
    if (z.size() != observation.size())
      fail(ErrorCode::DimensionMismatch, "observation size mismatch");
    double ll = -0.5 * (observation - z).squaredNorm();
    best = std::max(best, ll);
    post.log_weights(k) += ll;
  }
  if (!(best >= -700.0))
    fail(ErrorCode::DegenerateWeights,
         "observation at step " + std::to_string(prior.step) + " is outside every particle");
  post.normalize();
  if (options.resample) resample_if_needed(post, rng, options.rejuvenation);
  return post;
}

double normal_correlation_mmse(const ParticleEnsemble& ens, const StateFn& output_fn) {
  Vec w = ens.weights();
  Vec mean;
  double second = 0.0;
  for (int k = 0; k < ens.size(); ++k) {
    Vec z = call_state(output_fn, "output", ens.step, ens.states.row(k).transpose());
    if (k == 0) mean = Vec::Zero(z.size());
    mean += w(k) * z;
    second += w(k) * z.squaredNorm();
  }
  return std::max(0.0, second - mean.squaredNorm());
}

PlantTrajectory simulate_plant(const NonlinearPlantSpec& spec, int horizon, Rng& rng) {
  PlantTrajectory tr;
  Vec x = spec.x0_sampler(rng);
  if (x.size() != spec.state_dim) fail(ErrorCode::DimensionMismatch, "x0_sampler output size");
  for (int i = 0; i <= horizon; ++i) {
    if (!x.allFinite())
      fail(ErrorCode::NonFiniteState, "plant state diverged at step " + std::to_string(i));
    tr.states.push_back(x);
    Vec fx = call_state(spec.f, "f", i, x);
    Mat bx = call_gain(spec.b, i, x);
    Vec z = call_state(spec.h, "h", i, x);
    if (spec.mode == LoopMode::control) {
      Vec u = call_state(spec.g, "g", i, z);
      Vec w = rng.normal_vec(u.size());
      Vec e = u + w;
      x = drift_plus_gain(fx, bx, e);
      tr.signals.push_back(std::move(u));
      tr.observations.push_back(std::move(e));
      tr.noise.push_back(std::move(w));
    } else {
      Vec v = rng.normal_vec(z.size());
      Vec y = z + v;
      if (spec.epsilon != 0.0)
        x = drift_plus_gain(fx, spec.epsilon * bx, rng.normal_vec(bx.cols()));
      else
        x = fx;
      tr.signals.push_back(std::move(z));
      tr.observations.push_back(std::move(y));
      tr.noise.push_back(std::move(v));
    }
  }
  return tr;
}

std::vector<PlantTrajectory> simulate_error_trajectories(const NonlinearPlantSpec& spec,
                                                         int horizon, int trials,
                                                         std::uint64_t seed, int threads) {
  validate_nonlinear(spec);
  std::vector<PlantTrajectory> out(static_cast<std::size_t>(trials));
  parallel_for(out.size(), threads, [&](std::size_t t) {
    Rng rng(seed, streams::plant, t);
    out[t] = simulate_plant(spec, horizon, rng);
  });
  return out;
}

FilterTrace run_particle_filter(const NonlinearPlantSpec& spec,
                                const std::vector<Vec>& observations, int particles, Rng& rng) {
  FilterTrace trace;
  Mat init(particles, spec.state_dim);
  for (int k = 0; k < particles; ++k) init.row(k) = spec.x0_sampler(rng).transpose();
  ParticleEnsemble ens = make_ensemble(init, 0);

  const bool control = spec.mode == LoopMode::control;
  DecoupledModel model;
  StateFn obs_fn = spec.h;
  TransitionKernel fkernel;
  if (control) {
    model = decouple_feedback_noise(spec);
    obs_fn = model.u;
  } else {
    fkernel = filtering_kernel(spec);
  }
  const double a = (control || spec.epsilon == 0.0) ? 0.98 : 0.0;
  MeasurementOptions mopt;
  mopt.resample = false;

  const int n = static_cast<int>(observations.size()) - 1;
  for (int i = 0; i <= n; ++i) {
    trace.pmmse.push_back(normal_correlation_mmse(ens, obs_fn));
    ens = bayes_measurement_update(ens, observations[static_cast<std::size_t>(i)], obs_fn, rng, mopt);
    trace.cmmse.push_back(normal_correlation_mmse(ens, obs_fn));
    trace.min_ess_fraction = std::min(trace.min_ess_fraction, ens.ess / particles);
    if (i == n) break;
    resample_if_needed(ens, rng, a);
    ens = bayes_time_update(
        ens, control ? control_kernel(model, observations[static_cast<std::size_t>(i)]) : fkernel,
        rng);
  }
  return trace;
}

FilterTrace grid_filter_reference(const NonlinearPlantSpec& spec,
                                  const std::vector<Vec>& observations, int grid_points,
                                  double lo, double hi) {
  if (spec.state_dim != 1 || spec.obs_dim != 1)
    fail(ErrorCode::InvalidArgument, "grid filter handles scalar plants only");
  if (spec.mode != LoopMode::filtering || !(spec.epsilon > 0.0))
    fail(ErrorCode::ModeMismatch, "grid filter needs a filtering plant with eps > 0");
  if (grid_points < 2 || !(hi > lo)) fail(ErrorCode::InvalidArgument, "bad grid");
  const int G = grid_points;
  const double dx = (hi - lo) / (G - 1);
  Vec xs(G), hx(G), fx(G), sx(G);
  for (int j = 0; j < G; ++j) xs(j) = lo + j * dx;

  // The x0 density is estimated from the sampler on the same grid.
  Rng rng(0, streams::plant, 0);
  Vec p = Vec::Zero(G);
  const int draws = 200000;
  for (int k = 0; k < draws; ++k) {
    double x = spec.x0_sampler(rng)(0);
    long idx = std::lround((x - lo) / dx);
    if (idx >= 0 && idx < G) p(idx) += 1.0;
  }
  p /= p.sum();

  auto spread = [&](const Vec& w) {
    double m = w.dot(hx);
    return std::max(0.0, w.dot(hx.cwiseProduct(hx)) - m * m);
  };
  FilterTrace trace;
  const int n = static_cast<int>(observations.size()) - 1;
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j < G; ++j) {
      Vec x(1);
      x(0) = xs(j);
      hx(j) = call_state(spec.h, "h", i, x)(0);
      fx(j) = call_state(spec.f, "f", i, x)(0);
      sx(j) = std::abs(spec.epsilon * call_gain(spec.b, i, x)(0, 0));
    }
    trace.pmmse.push_back(spread(p));
    double y = observations[static_cast<std::size_t>(i)](0);
    Vec lw = (-0.5 * (hx.array() - y).square()).matrix();
    lw.array() -= lw.maxCoeff();
    p = p.cwiseProduct(lw.array().exp().matrix());
    p /= p.sum();
    trace.cmmse.push_back(spread(p));
    if (i == n) break;
    Vec next = Vec::Zero(G);
    for (int j = 0; j < G; ++j) {
      if (p(j) == 0.0) continue;
      Vec kern = (-0.5 * ((xs.array() - fx(j)) / sx(j)).square()).exp().matrix();
      double s = kern.sum();
      if (s > 0.0) next += (p(j) / s) * kern;
    }
    p = next / next.sum();
  }
  return trace;
}

RateReport nonlinear_rate_report(const NonlinearPlantSpec& spec, int horizon, int particles,
                                 int trials, std::uint64_t seed, const NonlinearOptions& options) {
  if (particles < 100) fail(ErrorCode::InvalidArgument, "particles must be at least 100");
  if (trials < 10) fail(ErrorCode::InvalidArgument, "trials must be at least 10");
  if (horizon < 1) fail(ErrorCode::InvalidArgument, "horizon must be at least 1");
  validate_nonlinear(spec);

  std::vector<FilterTrace> traces(static_cast<std::size_t>(trials));
  std::vector<char> aborted(static_cast<std::size_t>(trials), 0);
  std::vector<std::vector<double>> power(static_cast<std::size_t>(trials));
  parallel_for(traces.size(), options.threads, [&](std::size_t t) {
    Rng plant(seed, streams::plant, t);
    PlantTrajectory tr = simulate_plant(spec, horizon, plant);
    for (const auto& s : tr.signals) power[t].push_back(s.squaredNorm());
    Rng prng(seed, streams::particle, t);
    try {
      traces[t] = run_particle_filter(spec, tr.observations, particles, prng);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateWeights) throw;
      aborted[t] = 1;
    }
  });

  double max_power = 0.0;
  for (int i = 0; i <= horizon; ++i) {
    double pw = 0.0;
    for (int t = 0; t < trials; ++t) pw += power[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)];
    pw /= trials;
    max_power = std::max(max_power, pw);
  }
  if (!(max_power < spec.power_cap))
    fail(ErrorCode::PowerCapExceeded, "mean signal power " + std::to_string(max_power));

  const int n_aborted = static_cast<int>(std::count(aborted.begin(), aborted.end(), 1));
  if (n_aborted > options.max_abort_fraction * trials)
    fail(ErrorCode::DegenerateWeights,
         std::to_string(n_aborted) + " of " + std::to_string(trials) + " trials aborted");

  RateReport r;
  r.horizon = horizon;
  r.route = spec.mode == LoopMode::filtering ? "particle_filtering"
            : spec.g_invertible              ? "decoupled_feedback"
                                             : "density";
  double min_ess = 1.0;
  int violations = 0;
  for (int i = 0; i <= horizon; ++i) {
    std::vector<double> pm, cm;
    for (int t = 0; t < trials; ++t) {
      if (aborted[static_cast<std::size_t>(t)]) continue;
      pm.push_back(traces[static_cast<std::size_t>(t)].pmmse[static_cast<std::size_t>(i)]);
      cm.push_back(traces[static_cast<std::size_t>(t)].cmmse[static_cast<std::size_t>(i)]);
    }
    Moments a = moments(pm), c = moments(cm);
    r.per_step_pmmse.push_back(a.mean);
    r.per_step_cmmse.push_back(c.mean);
    r.stderr_pmmse.push_back(a.stderr_);
    r.stderr_cmmse.push_back(c.stderr_);
    if (c.mean > a.mean + 3.0 * std::hypot(a.stderr_, c.stderr_)) ++violations;
  }
  for (int t = 0; t < trials; ++t)
    if (!aborted[static_cast<std::size_t>(t)])
      min_ess = std::min(min_ess, traces[static_cast<std::size_t>(t)].min_ess_fraction);
  r.fill_bounds(1);
  r.diagnostics["particles"] = particles;
  r.diagnostics["trials"] = trials;
  r.diagnostics["aborted_trials"] = n_aborted;
  r.diagnostics["min_ess_fraction"] = min_ess;
  r.diagnostics["ordering_violations"] = violations;
  r.diagnostics["max_signal_power"] = max_power;
  return r;
}

NonlinearPlantSpec linear_as_nonlinear(const LtiSystemSpec& spec, double epsilon) {
  validate_lti(spec);
  NonlinearPlantSpec p;
  p.mode = spec.mode;
  p.state_dim = static_cast<int>(spec.A.rows());
  p.obs_dim = static_cast<int>(spec.C.rows());
  Mat A = spec.A, B = spec.B, C = spec.C;
  p.f = [A](int, const Vec& x) -> Vec { return A * x; };
  p.b = [B](int, const Vec&) -> Mat { return B; };
  p.h = [C](int, const Vec& x) -> Vec { return C * x; };
  if (spec.mode == LoopMode::control) {
    p.g = [](int, const Vec& y) -> Vec { return y; };
    p.g_invertible = true;
  }
  p.epsilon = epsilon;
  Mat L = cholesky_or_sqrt(spec.prior());
  p.x0_sampler = [L](Rng& rng) -> Vec { return L * rng.normal_vec(L.cols()); };
  return p;
}

}  // namespace imse
