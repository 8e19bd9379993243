#include "imse/channel_sim.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "imse/errors.hpp"
#include "imse/parallel.hpp"

namespace imse {

namespace {

Mat noise_factor(const ChannelSpec& spec) {
  if (spec.noise_cov.size() == 0) return Mat::Identity(spec.dim, spec.dim);
  if (spec.noise_cov.rows() != spec.dim || spec.noise_cov.cols() != spec.dim)
    fail(ErrorCode::DimensionMismatch, "noise covariance must be dim x dim");
  Eigen::LLT<Mat> llt(spec.noise_cov);
  if (llt.info() != Eigen::Success) fail(ErrorCode::NotPSD, "noise covariance is not PD");
  return llt.matrixL();
}

Mat noise_cov_of(const ChannelSpec& spec) {
  return spec.noise_cov.size() == 0 ? Mat::Identity(spec.dim, spec.dim) : spec.noise_cov;
}

Vec call_input(const ChannelSpec& spec, const Vec& m, const std::vector<Vec>& past, int i) {
  Vec phi;
  try {
    phi = spec.input_fn(m, past, i);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorCode::CallbackFailure, std::string("input_fn: ") + e.what());
  }
  if (phi.size() != spec.dim)
    fail(ErrorCode::CallbackFailure, "input_fn returned a vector of the wrong size");
  if (!phi.allFinite()) fail(ErrorCode::CallbackFailure, "input_fn returned a non-finite value");
  return phi;
}

Vec call_sampler(const ChannelSpec& spec, Rng& rng) {
  try {
    return spec.message_sampler(rng);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorCode::CallbackFailure, std::string("message_sampler: ") + e.what());
  }
}

void check_spec(const ChannelSpec& spec, int horizon, int trials, std::uint64_t seed) {
  if (horizon < 1) fail(ErrorCode::InvalidArgument, "horizon must be at least 1");
  if (trials < 1) fail(ErrorCode::InvalidArgument, "trials must be at least 1");
  if (spec.dim < 1) fail(ErrorCode::InvalidArgument, "channel dimension must be positive");
  if (!spec.input_fn || !spec.message_sampler)
    fail(ErrorCode::InvalidArgument, "channel needs input_fn and message_sampler");
  if (spec.feedback) return;
  Rng rng(seed, streams::channel, ~std::uint64_t{0});
  Vec m = call_sampler(spec, rng);
  for (int k = 1; k <= std::min(horizon, 3); ++k) {
    std::vector<Vec> h0(static_cast<std::size_t>(k), Vec::Zero(spec.dim));
    std::vector<Vec> h1(static_cast<std::size_t>(k), Vec::Constant(spec.dim, 1.5 + k));
    if ((call_input(spec, m, h0, k) - call_input(spec, m, h1, k)).norm() != 0.0)
      fail(ErrorCode::ValidationFailure,
           "input_fn depends on past outputs although feedback is disabled");
  }
}

struct Moments {
  double mean = 0.0;
  double stderr_ = 0.0;
};

Moments moments(const std::vector<double>& x) {
  Moments m;
  const double n = static_cast<double>(x.size());
  if (x.empty()) return m;
  m.mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  if (x.size() > 1) {
    double ss = 0.0;
    for (double v : x) ss += (v - m.mean) * (v - m.mean);
    m.stderr_ = std::sqrt(ss / (n - 1.0) / n);
  }
  return m;
}

Vec features(const std::vector<Vec>& ys, int upto, int degree) {
  // [1, y, y^2, ..., y^degree] for every coordinate of Y_0..Y_{upto-1}
  Eigen::Index d = ys.empty() ? 0 : ys[0].size();
  Vec f(1 + static_cast<Eigen::Index>(upto) * d * degree);
  f(0) = 1.0;
  Eigen::Index k = 1;
  for (int j = 0; j < upto; ++j)
    for (Eigen::Index c = 0; c < d; ++c) {
      double v = ys[static_cast<std::size_t>(j)](c), pw = 1.0;
      for (int g = 1; g <= degree; ++g) {
        pw *= v;
        f(k++) = pw;
      }
    }
  return f;
}

// Cross-fitted squared residual per trial of regressing inputs at step i on Y_0..Y_{upto-1}.
std::vector<double> crossfit_residuals(const ChannelEnsemble& ens, int i, int upto, int degree) {
  const int T = ens.trials;
  const Eigen::Index d = ens.inputs[0][0].size();
  const Eigen::Index k = features(ens.outputs[0], upto, degree).size();
  Mat X(T, k), Yt(T, d);
  for (int t = 0; t < T; ++t) {
    X.row(t) = features(ens.outputs[static_cast<std::size_t>(t)], upto, degree).transpose();
    Yt.row(t) = ens.inputs[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)].transpose();
  }
  std::vector<double> err(static_cast<std::size_t>(T), 0.0);
  for (int fold = 0; fold < 2; ++fold) {
    std::vector<int> fit, eval;
    for (int t = 0; t < T; ++t) (t % 2 == fold ? eval : fit).push_back(t);
    if (fit.empty() || eval.empty()) continue;
    Mat Xf(static_cast<Eigen::Index>(fit.size()), k), Yf(static_cast<Eigen::Index>(fit.size()), d);
    for (std::size_t r = 0; r < fit.size(); ++r) {
      Xf.row(static_cast<Eigen::Index>(r)) = X.row(fit[r]);
      Yf.row(static_cast<Eigen::Index>(r)) = Yt.row(fit[r]);
    }
    Mat beta = Xf.colPivHouseholderQr().solve(Yf);
    for (int t : eval) {
      Vec res = Yt.row(t).transpose() - beta.transpose() * X.row(t).transpose();
      err[static_cast<std::size_t>(t)] = res.squaredNorm();
    }
  }
  if (T == 1) {
    // a single trial cannot be cross-fitted; fall back to in-sample
    Mat beta = X.colPivHouseholderQr().solve(Yt);
    err[0] = (Yt.row(0).transpose() - beta.transpose() * X.row(0).transpose()).squaredNorm();
  }
  return err;
}

double weighted_spread(const std::vector<Vec>& v, const Vec& w) {
  Vec mean = Vec::Zero(v[0].size());
  double second = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    mean += w(static_cast<Eigen::Index>(k)) * v[k];
    second += w(static_cast<Eigen::Index>(k)) * v[k].squaredNorm();
  }
  return std::max(0.0, second - mean.squaredNorm());
}

std::vector<int> systematic_resample(const Vec& w, double u0) {
  const int N = static_cast<int>(w.size());
  std::vector<int> idx(static_cast<std::size_t>(N));
  double c = w(0);
  int j = 0;
  for (int k = 0; k < N; ++k) {
    double u = (u0 + k) / N;
    while (u > c && j < N - 1) c += w(++j);
    idx[static_cast<std::size_t>(k)] = j;
  }
  return idx;
}

}  // namespace

const char* estimator_name(Estimator e) {
  switch (e) {
    case Estimator::closed_form: return "closed_form";
    case Estimator::regression: return "regression";
    case Estimator::particle: return "particle";
  }
  return "unknown";
}

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::holds: return "holds";
    case Verdict::violated: return "violated";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "unknown";
}

ChannelSpec make_linear_channel(const LinearChannel& lc, int dim) {
  if (!lc.F) fail(ErrorCode::InvalidArgument, "linear channel needs F");
  ChannelSpec spec;
  spec.dim = dim;
  spec.feedback = static_cast<bool>(lc.K);
  spec.conjugate = lc;
  Eigen::LLT<Mat> llt(lc.message_cov);
  Mat L;
  if (llt.info() == Eigen::Success) {
    L = llt.matrixL();
  } else {
    Eigen::SelfAdjointEigenSolver<Mat> es(lc.message_cov);
    L = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }
  spec.message_sampler = [L](Rng& rng) -> Vec { return L * rng.normal_vec(L.cols()); };
  auto F = lc.F;
  auto K = lc.K;
  spec.input_fn = [F, K, dim](const Vec& m, const std::vector<Vec>& past, int i) -> Vec {
    Vec phi = F(i) * m;
    if (K)
      for (int j = 0; j < i && j < static_cast<int>(past.size()); ++j)
        phi += K(i, j) * past[static_cast<std::size_t>(j)];
    if (phi.size() != dim) fail(ErrorCode::DimensionMismatch, "F_i m has the wrong size");
    return phi;
  };
  return spec;
}

LinearChannel lti_control_channel(const LtiSystemSpec& spec, int horizon) {
  validate_lti(spec);
  auto powers = std::make_shared<std::vector<Mat>>();
  Mat P = Mat::Identity(spec.A.rows(), spec.A.rows());
  for (int k = 0; k <= horizon + 1; ++k) {
    powers->push_back(P);
    P = spec.A * P;
  }
  Mat A = spec.A, B = spec.B, G = spec.C;
  auto pw = [powers, A](int k) -> Mat {
    if (k < static_cast<int>(powers->size())) return (*powers)[static_cast<std::size_t>(k)];
    Mat M = powers->back();
    for (int j = static_cast<int>(powers->size()) - 1; j < k; ++j) M = A * M;
    return M;
  };
  LinearChannel lc;
  lc.message_cov = spec.prior();
  lc.F = [G, pw](int i) -> Mat { return G * pw(i); };
  lc.K = [G, B, pw](int i, int j) -> Mat { return G * pw(i - 1 - j) * B; };
  return lc;
}

ChannelEnsemble simulate_channel(const ChannelSpec& spec, int horizon, int trials,
                                 std::uint64_t seed, int threads) {
  check_spec(spec, horizon, trials, seed);
  Mat L = noise_factor(spec);
  ChannelEnsemble ens;
  ens.horizon = horizon;
  ens.trials = trials;
  ens.messages.resize(static_cast<std::size_t>(trials));
  ens.inputs.resize(static_cast<std::size_t>(trials));
  ens.outputs.resize(static_cast<std::size_t>(trials));
  parallel_for(static_cast<std::size_t>(trials), threads, [&](std::size_t t) {
    Rng rng(seed, streams::channel, t);
    Vec m = call_sampler(spec, rng);
    std::vector<Vec> phis, ys;
    phis.reserve(static_cast<std::size_t>(horizon) + 1);
    ys.reserve(static_cast<std::size_t>(horizon) + 1);
    for (int i = 0; i <= horizon; ++i) {
      Vec phi = call_input(spec, m, ys, i);
      ys.push_back(phi + L * rng.normal_vec(spec.dim));
      phis.push_back(std::move(phi));
    }
    ens.messages[t] = std::move(m);
    ens.inputs[t] = std::move(phis);
    ens.outputs[t] = std::move(ys);
  });
  for (int i = 0; i <= horizon; ++i) {
    double power = 0.0;
    for (int t = 0; t < trials; ++t)
      power += ens.inputs[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)].squaredNorm();
    power /= trials;
    if (!(power < spec.power_cap))
      fail(ErrorCode::PowerCapExceeded,
           "empirical input power " + std::to_string(power) + " at step " + std::to_string(i));
  }
  return ens;
}

MmseLedger estimate_mmse_ledger(const ChannelSpec& spec, int horizon, int trials,
                                std::uint64_t seed, Estimator estimator,
                                const EstimatorOptions& options) {
  MmseLedger ledger;
  ledger.horizon = horizon;
  ledger.trials = trials;
  ledger.estimator = estimator_name(estimator);
  const std::size_t N = static_cast<std::size_t>(horizon) + 1;

  if (estimator == Estimator::closed_form) {
    if (!spec.conjugate)
      fail(ErrorCode::UnsupportedEstimator, "closed_form needs a conjugate-Gaussian channel");
    if (horizon < 1) fail(ErrorCode::InvalidArgument, "horizon must be at least 1");
    const LinearChannel& lc = *spec.conjugate;
    Mat R = noise_cov_of(spec);
    Mat S = lc.message_cov;
    for (int i = 0; i <= horizon; ++i) {
      Mat F = lc.F(i);
      ledger.pmmse.push_back((F * S * F.transpose()).trace());
      Mat Sy = F * S * F.transpose() + R;
      Mat K = Sy.llt().solve(F * S).transpose();
      Mat IKF = Mat::Identity(S.rows(), S.rows()) - K * F;
      S = symmetrize(IKF * S * IKF.transpose() + K * R * K.transpose());
      ledger.cmmse.push_back((F * S * F.transpose()).trace());
    }
    ledger.stderr_cmmse.assign(N, 0.0);
    ledger.stderr_pmmse.assign(N, 0.0);
    ledger.quality = "exact";
    return ledger;
  }

  ChannelEnsemble ens = simulate_channel(spec, horizon, trials, seed, options.threads);

  if (estimator == Estimator::regression) {
    if (options.regression_degree < 1)
      fail(ErrorCode::InvalidArgument, "regression degree must be at least 1");
    ledger.cmmse.resize(N);
    ledger.pmmse.resize(N);
    ledger.stderr_cmmse.resize(N);
    ledger.stderr_pmmse.resize(N);
    parallel_for(N, options.threads, [&](std::size_t i) {
      int ii = static_cast<int>(i);
      Moments p = moments(crossfit_residuals(ens, ii, ii, options.regression_degree));
      Moments c = moments(crossfit_residuals(ens, ii, ii + 1, options.regression_degree));
      ledger.pmmse[i] = p.mean;
      ledger.stderr_pmmse[i] = p.stderr_;
      ledger.cmmse[i] = c.mean;
      ledger.stderr_cmmse[i] = c.stderr_;
    });
    ledger.quality = "upper-bound";
    return ledger;
  }

  // Particle approximation of the message posterior along each simulated path.
  const int P = options.particles;
  if (P < 2) fail(ErrorCode::InvalidArgument, "particle estimator needs at least 2 particles");
  Mat R = noise_cov_of(spec);
  Eigen::LLT<Mat> Rllt(R);
  std::vector<std::vector<double>> pm(static_cast<std::size_t>(trials)),
      cm(static_cast<std::size_t>(trials));
  parallel_for(static_cast<std::size_t>(trials), options.threads, [&](std::size_t t) {
    Rng rng(seed, streams::particle, t);
    std::vector<Vec> msg(static_cast<std::size_t>(P));
    for (auto& m : msg) m = call_sampler(spec, rng);
    Vec w = Vec::Constant(P, 1.0 / P);
    const auto& ys = ens.outputs[t];
    std::vector<Vec> past;
    std::vector<Vec> phi(static_cast<std::size_t>(P));
    for (int i = 0; i <= horizon; ++i) {
      for (int k = 0; k < P; ++k)
        phi[static_cast<std::size_t>(k)] = call_input(spec, msg[static_cast<std::size_t>(k)], past, i);
      pm[t].push_back(weighted_spread(phi, w));
      const Vec& y = ys[static_cast<std::size_t>(i)];
      Vec logw(P);
      double top = -INFINITY;
      for (int k = 0; k < P; ++k) {
        Vec r = Rllt.matrixL().solve(y - phi[static_cast<std::size_t>(k)]);
        double ll = -0.5 * r.squaredNorm();
        logw(k) = std::log(w(k)) + ll;
        top = std::max(top, ll);
      }
      if (top < -700.0) fail(ErrorCode::DegenerateWeights, "observation outside every particle");
      double mx = logw.maxCoeff();
      w = (logw.array() - mx).exp();
      w /= w.sum();
      cm[t].push_back(weighted_spread(phi, w));
      double ess = 1.0 / w.squaredNorm();
      if (ess < 0.01 * P) fail(ErrorCode::DegenerateWeights, "effective sample size below 1%");
      if (ess < 0.5 * P) {
        const Eigen::Index md = msg[0].size();
        Vec mean = Vec::Zero(md);
        for (int k = 0; k < P; ++k) mean += w(k) * msg[static_cast<std::size_t>(k)];
        Mat V = Mat::Zero(md, md);
        for (int k = 0; k < P; ++k) {
          Vec d = msg[static_cast<std::size_t>(k)] - mean;
          V += w(k) * d * d.transpose();
        }
        auto idx = systematic_resample(w, rng.uniform());
        std::vector<Vec> next(static_cast<std::size_t>(P));
        // Liu-West shrinkage keeps the first two moments while breaking ties.
        const double a = 0.98, h = std::sqrt(1.0 - a * a);
        Eigen::LLT<Mat> Vl(V + 1e-300 * Mat::Identity(md, md));
        Mat LV = Vl.info() == Eigen::Success ? Mat(Vl.matrixL()) : Mat::Zero(md, md);
        for (int k = 0; k < P; ++k)
          next[static_cast<std::size_t>(k)] = a * msg[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])] +
                                              (1.0 - a) * mean + h * LV * rng.normal_vec(md);
        msg = std::move(next);
        w.setConstant(1.0 / P);
      }
      past.push_back(y);
    }
  });
  ledger.cmmse.resize(N);
  ledger.pmmse.resize(N);
  ledger.stderr_cmmse.resize(N);
  ledger.stderr_pmmse.resize(N);
  for (std::size_t i = 0; i < N; ++i) {
    std::vector<double> a, b;
    for (int t = 0; t < trials; ++t) {
      a.push_back(pm[static_cast<std::size_t>(t)][i]);
      b.push_back(cm[static_cast<std::size_t>(t)][i]);
    }
    Moments ma = moments(a), mb = moments(b);
    ledger.pmmse[i] = ma.mean;
    ledger.stderr_pmmse[i] = ma.stderr_;
    ledger.cmmse[i] = mb.mean;
    ledger.stderr_cmmse[i] = mb.stderr_;
  }
  ledger.quality = "approximate";
  return ledger;
}

SandwichReport verify_sandwich(const MmseLedger& ledger, const InfoValue& info) {
  if (ledger.steps() != info.horizon)
    fail(ErrorCode::HorizonMismatch, "ledger covers " + std::to_string(ledger.steps()) +
                                         " steps but the information value covers " +
                                         std::to_string(info.horizon));
  SandwichReport r;
  auto half_sum = [](const std::vector<double>& v) {
    return 0.5 * std::accumulate(v.begin(), v.end(), 0.0);
  };
  r.lower = half_sum(ledger.cmmse);
  r.upper = half_sum(ledger.pmmse);
  r.sigma_lower = half_sum(ledger.stderr_cmmse);
  r.sigma_upper = half_sum(ledger.stderr_pmmse);
  r.info = info.nats;
  r.margin_lower = r.info - r.lower;
  r.margin_upper = r.upper - r.info;
  const double steps = static_cast<double>(info.horizon);
  r.rate_lower = r.lower / steps;
  r.rate_info = r.info / steps;
  r.rate_upper = r.upper / steps;
  if (!std::isfinite(r.lower) || !std::isfinite(r.upper) || !std::isfinite(r.info) ||
      !std::isfinite(r.sigma_lower) || !std::isfinite(r.sigma_upper)) {
    r.verdict = Verdict::inconclusive;
    return r;
  }
  const double tol = 1e-9 * std::max(1.0, std::abs(r.info));
  bool ok = r.lower - 3.0 * r.sigma_lower - tol <= r.info &&
            r.info <= r.upper + 3.0 * r.sigma_upper + tol;
  r.verdict = ok ? Verdict::holds : Verdict::violated;
  return r;
}

GaussianJoint channel_joint(const LinearChannel& lc, int dim, int horizon) {
  if (horizon < 0) fail(ErrorCode::InvalidArgument, "negative horizon");
  const Eigen::Index md = lc.message_cov.rows();
  const int N = horizon + 1;
  const Eigen::Index base = md + static_cast<Eigen::Index>(N) * dim;
  // Rows: M then Y_0..Y_n as linear maps of (M, W_0..W_n).
  Mat coef = Mat::Zero(md + static_cast<Eigen::Index>(N) * dim, base);
  coef.topLeftCorner(md, md).setIdentity();
  for (int i = 0; i < N; ++i) {
    auto rows = coef.middleRows(md + static_cast<Eigen::Index>(i) * dim, dim);
    Mat F = lc.F(i);
    if (F.rows() != dim || F.cols() != md)
      fail(ErrorCode::DimensionMismatch, "F_i must be dim x message_dim");
    rows.leftCols(md) = F;
    rows.middleCols(md + static_cast<Eigen::Index>(i) * dim, dim) += Mat::Identity(dim, dim);
    if (lc.K)
      for (int j = 0; j < i; ++j)
        rows += lc.K(i, j) * coef.middleRows(md + static_cast<Eigen::Index>(j) * dim, dim);
  }
  Mat D = Mat::Identity(base, base);
  D.topLeftCorner(md, md) = lc.message_cov;
  GaussianJoint joint;
  joint.steps = N;
  joint.cov = symmetrize(coef * D * coef.transpose());
  joint.mean = Vec::Zero(joint.cov.rows());
  joint.add_block("M", md);
  joint.add_block("Y", static_cast<Eigen::Index>(N) * dim);
  return joint;
}

InfoValue channel_information(const LinearChannel& lc, int dim, int horizon) {
  return mutual_information_blocks(channel_joint(lc, dim, horizon), "M", "Y");
}

}  // namespace imse
