#include "imse/entropy_knn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/special_functions/digamma.hpp>

#include "imse/errors.hpp"
#include "imse/parallel.hpp"

namespace imse {

namespace {

constexpr int kNeighbourList = 12;

struct Whitened {
  Mat Zt;  // d x N
  double log_det_L = 0.0;
};

Whitened whiten(const Mat& X) {
  const double N = static_cast<double>(X.rows());
  Vec mean = X.colwise().mean().transpose();
  Mat centered = X.rowwise() - mean.transpose();
  Mat cov = symmetrize(centered.transpose() * centered / (N - 1.0));
  Eigen::LLT<Mat> llt(cov);
  if (llt.info() != Eigen::Success)
    fail(ErrorCode::SingularCovariance, "sample covariance of the trajectories is singular");
  Whitened w;
  w.Zt = llt.matrixL().solve(centered.transpose());
  w.log_det_L = Mat(llt.matrixL()).diagonal().array().log().sum();
  return w;
}

double log_unit_ball(int d) {
  const double h = 0.5 * d;
  return h * std::log(std::numbers::pi) - std::lgamma(h + 1.0);
}

// Sorted squared distances and indices of the nearest neighbours of every point.
struct NeighbourTable {
  std::vector<std::vector<std::pair<double, int>>> rows;
};

NeighbourTable neighbours(const Mat& Zt, int keep, int threads) {
  const int N = static_cast<int>(Zt.cols());
  NeighbourTable t;
  t.rows.resize(static_cast<std::size_t>(N));
  keep = std::min(keep, N - 1);
  parallel_for(static_cast<std::size_t>(N), threads, [&](std::size_t i) {
    Vec d2 = (Zt.colwise() - Zt.col(static_cast<Eigen::Index>(i))).colwise().squaredNorm().transpose();
    std::vector<std::pair<double, int>> all;
    all.reserve(static_cast<std::size_t>(N) - 1);
    for (int j = 0; j < N; ++j)
      if (j != static_cast<int>(i)) all.emplace_back(d2(j), j);
    std::partial_sort(all.begin(), all.begin() + keep, all.end());
    t.rows[i].assign(all.begin(), all.begin() + keep);
  });
  return t;
}

double kth_distance_excluding(const Mat& Zt, const NeighbourTable& t, int i, int k, int groups,
                              int excluded) {
  int seen = 0;
  for (const auto& [d2, j] : t.rows[static_cast<std::size_t>(i)]) {
    if (excluded >= 0 && j % groups == excluded) continue;
    if (++seen == k) return std::sqrt(d2);
  }
  // Fallback: the cached list ran out, search the retained points directly.
  std::vector<double> d;
  const int N = static_cast<int>(Zt.cols());
  for (int j = 0; j < N; ++j) {
    if (j == i || (excluded >= 0 && j % groups == excluded)) continue;
    d.push_back((Zt.col(j) - Zt.col(i)).squaredNorm());
  }
  std::nth_element(d.begin(), d.begin() + (k - 1), d.end());
  return std::sqrt(d[static_cast<std::size_t>(k - 1)]);
}

struct JackknifeEntropy {
  double full = 0.0;
  std::vector<double> leave_out;  // one per deleted group
};

JackknifeEntropy knn_entropy_jackknife(const Mat& X, int k, int groups, int threads) {
  const int N = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  if (k < 1 || k >= N) fail(ErrorCode::InvalidArgument, "k must lie in [1, N)");
  Whitened w = whiten(X);
  NeighbourTable table = neighbours(w.Zt, std::max(k, kNeighbourList), threads);

  auto estimate = [&](int excluded) {
    double sum = 0.0;
    int m = 0;
    for (int i = 0; i < N; ++i) {
      if (excluded >= 0 && i % groups == excluded) continue;
      double rho = kth_distance_excluding(w.Zt, table, i, k, groups, excluded);
      sum += std::log(std::max(rho, 1e-300));
      ++m;
    }
    using boost::math::digamma;
    return digamma(static_cast<double>(m)) - digamma(static_cast<double>(k)) + log_unit_ball(d) +
           d * sum / m + w.log_det_L;
  };

  JackknifeEntropy j;
  j.full = estimate(-1);
  j.leave_out.resize(static_cast<std::size_t>(groups));
  parallel_for(static_cast<std::size_t>(groups), threads,
               [&](std::size_t g) { j.leave_out[g] = estimate(static_cast<int>(g)); });
  return j;
}

double jackknife_stderr(const std::vector<double>& theta) {
  const double G = static_cast<double>(theta.size());
  double mean = 0.0;
  for (double v : theta) mean += v;
  mean /= G;
  double ss = 0.0;
  for (double v : theta) ss += (v - mean) * (v - mean);
  return std::sqrt((G - 1.0) / G * ss);
}

}  // namespace

double knn_entropy(const Mat& samples, int k, int threads) {
  const int N = static_cast<int>(samples.rows());
  if (k < 1 || k >= N) fail(ErrorCode::InvalidArgument, "k must lie in [1, N)");
  Whitened w = whiten(samples);
  NeighbourTable table = neighbours(w.Zt, k, threads);
  double sum = 0.0;
  for (int i = 0; i < N; ++i)
    sum += std::log(std::max(std::sqrt(table.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k - 1)].first), 1e-300));
  const int d = static_cast<int>(samples.cols());
  using boost::math::digamma;
  return digamma(static_cast<double>(N)) - digamma(static_cast<double>(k)) + log_unit_ball(d) +
         d * sum / N + w.log_det_L;
}

EntropyRateEstimate entropy_difference_rate_estimate(const Mat& trajectories, int step_dim,
                                                     int horizon, const KnnOptions& options) {
  const int T = static_cast<int>(trajectories.rows());
  const int L = horizon + 1;
  if (step_dim < 1 || horizon < 0) fail(ErrorCode::InvalidArgument, "bad trajectory shape");
  if (trajectories.cols() != static_cast<Eigen::Index>(L) * step_dim)
    fail(ErrorCode::DimensionMismatch, "trajectory rows must hold (horizon+1)*step_dim values");
  if (T < 1000)
    fail(ErrorCode::InsufficientSamples,
         "need at least 1000 trajectories, got " + std::to_string(T));
  if (options.groups < 2) fail(ErrorCode::InvalidArgument, "jackknife needs at least 2 groups");

  const double noise_per_step = 0.5 * step_dim * std::log(2.0 * std::numbers::pi * std::numbers::e);
  EntropyRateEstimate est;
  est.samples = T;
  std::vector<double> theta(static_cast<std::size_t>(options.groups));

  if (L * step_dim <= options.max_dim) {
    JackknifeEntropy h = knn_entropy_jackknife(trajectories, options.k, options.groups, options.threads);
    est.window = L;
    est.rate = (h.full - L * noise_per_step) / L;
    for (int g = 0; g < options.groups; ++g)
      theta[static_cast<std::size_t>(g)] = (h.leave_out[static_cast<std::size_t>(g)] - L * noise_per_step) / L;
    est.stderr_ = jackknife_stderr(theta);
    return est;
  }
  if (!options.windowing)
    fail(ErrorCode::DimensionTooHigh,
         "trajectory dimension " + std::to_string(L * step_dim) + " exceeds the cap " +
             std::to_string(options.max_dim));
  const int w = options.max_dim / step_dim;
  if (w < 2)
    fail(ErrorCode::DimensionTooHigh, "window cap leaves fewer than two steps per sample");
  // Conditional entropy of the last step given the previous w-1 steps.
  Mat big = trajectories.rightCols(static_cast<Eigen::Index>(w) * step_dim);
  Mat small = trajectories.rightCols(static_cast<Eigen::Index>(w - 1) * step_dim);
  JackknifeEntropy hb = knn_entropy_jackknife(big, options.k, options.groups, options.threads);
  JackknifeEntropy hs = knn_entropy_jackknife(small, options.k, options.groups, options.threads);
  est.window = w;
  est.rate = hb.full - hs.full - noise_per_step;
  for (int g = 0; g < options.groups; ++g)
    theta[static_cast<std::size_t>(g)] =
        hb.leave_out[static_cast<std::size_t>(g)] - hs.leave_out[static_cast<std::size_t>(g)] - noise_per_step;
  est.stderr_ = jackknife_stderr(theta);
  return est;
}

}  // namespace imse
