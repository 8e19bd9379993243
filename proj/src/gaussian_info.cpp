#include "imse/gaussian_info.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "imse/errors.hpp"

namespace imse {

namespace {

double to_double(double x) { return x; }
double to_double(const quad& x) { return x.convert_to<double>(); }

using std::log;
using boost::multiprecision::log;

template <class S>
using MatT = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <class S>
S logdet_chol(const MatT<S>& M) {
  if (M.size() == 0) return S(0);
  Eigen::LLT<MatT<S>> llt(M);
  if (llt.info() != Eigen::Success) {
    MatT<S> J = M;
    S jitter = S(1e-12) * M.trace();
    if (jitter < S(0)) jitter = -jitter;
    J.diagonal().array() += jitter;
    llt.compute(J);
    if (llt.info() != Eigen::Success)
      fail(ErrorCode::SingularCovariance, "joint covariance block is not positive definite");
  }
  S ld(0);
  for (Eigen::Index i = 0; i < M.rows(); ++i) ld += log(llt.matrixLLT()(i, i));
  ld *= 2;
  double d = to_double(ld);
  if (!std::isfinite(d) || d < std::log(1e-300))
    fail(ErrorCode::SingularCovariance, "block determinant below 1e-300");
  return ld;
}

template <class S>
std::vector<Eigen::Index> indices_of(const BasicGaussianJoint<S>& joint,
                                     const std::vector<std::string>& labels) {
  std::vector<Eigen::Index> idx;
  for (const auto& l : labels) {
    BlockRange r = joint.block(l);
    for (Eigen::Index k = 0; k < r.size; ++k) idx.push_back(r.offset + k);
  }
  return idx;
}

template <class S>
MatT<S> sub(const MatT<S>& C, const std::vector<Eigen::Index>& idx) {
  const Eigen::Index k = static_cast<Eigen::Index>(idx.size());
  MatT<S> out(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) out(i, j) = C(idx[i], idx[j]);
  return out;
}

template <class S>
S logdet_of(const BasicGaussianJoint<S>& joint, const std::vector<Eigen::Index>& idx) {
  return logdet_chol<S>(sub<S>(joint.cov, idx));
}

template <class S>
std::vector<Eigen::Index> merged(std::vector<Eigen::Index> a, const std::vector<Eigen::Index>& b) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  if (std::adjacent_find(a.begin(), a.end()) != a.end())
    fail(ErrorCode::InvalidArgument, "block sets overlap");
  return a;
}

}  // namespace

template <class S>
BlockRange BasicGaussianJoint<S>::block(const std::string& label) const {
  for (const auto& [name, range] : blocks)
    if (name == label) return range;
  fail(ErrorCode::UnknownBlock, "no block labelled '" + label + "'");
}

template <class S>
bool BasicGaussianJoint<S>::has_block(const std::string& label) const {
  for (const auto& b : blocks)
    if (b.first == label) return true;
  return false;
}

template <class S>
void BasicGaussianJoint<S>::add_block(const std::string& label, Eigen::Index size) {
  Eigen::Index offset = 0;
  for (const auto& b : blocks) offset = std::max(offset, b.second.offset + b.second.size);
  blocks.push_back({label, BlockRange{offset, size}});
}

template <class S>
void validate_joint(const BasicGaussianJoint<S>& joint) {
  const Eigen::Index n = joint.cov.rows();
  if (joint.cov.cols() != n || joint.mean.size() != n)
    fail(ErrorCode::DimensionMismatch, "joint mean/cov sizes disagree");
  std::vector<int> hits(static_cast<std::size_t>(n), 0);
  for (const auto& [name, r] : joint.blocks) {
    if (r.offset < 0 || r.size < 0 || r.offset + r.size > n)
      fail(ErrorCode::DimensionMismatch, "block '" + name + "' out of range");
    for (Eigen::Index k = 0; k < r.size; ++k) hits[static_cast<std::size_t>(r.offset + k)]++;
  }
  for (int h : hits)
    if (h != 1) fail(ErrorCode::ValidationFailure, "blocks must be disjoint and cover the joint");
  Mat C(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) C(i, j) = to_double(joint.cov(i, j));
  double scale = n > 0 ? C.cwiseAbs().maxCoeff() : 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < i; ++j) {
      S diff = joint.cov(i, j) - joint.cov(j, i);
      if (std::abs(to_double(diff)) > 1e-12 * scale)
        fail(ErrorCode::ValidationFailure, "joint covariance is not symmetric");
    }
  if (n > 0 && n <= 400) {
    Eigen::SelfAdjointEigenSolver<Mat> es(C, Eigen::EigenvaluesOnly);
    double top = es.eigenvalues().maxCoeff();
    if (es.eigenvalues().minCoeff() < -1e-10 * std::max(top, 0.0))
      fail(ErrorCode::NotPSD, "joint covariance has a negative eigenvalue");
  }
}

template <class S>
InfoValue differential_entropy(const BasicGaussianJoint<S>& joint, const std::string& block) {
  BlockRange r = joint.block(block);
  std::vector<Eigen::Index> idx;
  for (Eigen::Index k = 0; k < r.size; ++k) idx.push_back(r.offset + k);
  MatT<S> Sb = sub<S>(joint.cov, idx);
  if (r.size == 0) return {0.0, joint.steps};
  Eigen::LLT<MatT<S>> llt(Sb);
  if (llt.info() != Eigen::Success)
    fail(ErrorCode::SingularCovariance, "block '" + block + "' is not positive definite");
  S ld(0);
  for (Eigen::Index i = 0; i < r.size; ++i) ld += log(llt.matrixLLT()(i, i));
  double logdet = 2.0 * to_double(ld);
  if (!std::isfinite(logdet) || logdet <= std::log(1e-300))
    fail(ErrorCode::SingularCovariance, "block '" + block + "' has determinant below 1e-300");
  const double k = static_cast<double>(r.size);
  double h = 0.5 * (k * std::log(2.0 * std::numbers::pi * std::numbers::e)) + 0.5 * logdet;
  return {h, joint.steps};
}

template <class S>
InfoValue mutual_information(const BasicGaussianJoint<S>& joint, const std::vector<std::string>& a,
                             const std::vector<std::string>& b,
                             const std::vector<std::string>& given) {
  auto ia = indices_of(joint, a);
  auto ib = indices_of(joint, b);
  auto ic = indices_of(joint, given);
  S value = logdet_of(joint, merged<S>(ia, ic)) + logdet_of(joint, merged<S>(ib, ic)) -
            logdet_of(joint, merged<S>(merged<S>(ia, ib), ic)) - logdet_of(joint, ic);
  return {0.5 * to_double(value), joint.steps};
}

template <class S>
InfoValue mutual_information_blocks(const BasicGaussianJoint<S>& joint, const std::string& a,
                                    const std::string& b) {
  return mutual_information(joint, {a}, {b});
}

template <class S>
BasicGaussianJoint<S> assemble_closed_loop_joint(const LtiSystemSpec& system, int horizon,
                                                 double epsilon, LoopMode mode) {
  if (horizon < 1) fail(ErrorCode::InvalidArgument, "horizon must be at least 1");
  LtiSystemSpec spec = system;
  spec.mode = mode;
  const Eigen::Index nx = spec.A.rows();
  if (nx == 0 || spec.A.cols() != nx || spec.B.rows() != nx || spec.C.cols() != nx)
    fail(ErrorCode::DimensionMismatch, "system matrices have inconsistent shapes");
  const Eigen::Index p = spec.C.rows();
  const Eigen::Index q = spec.B.cols();
  if (mode == LoopMode::control) {
    if (q != p) fail(ErrorCode::DimensionMismatch, "control loop needs G rows == B columns");
    double rho = spectral_radius(spec.closed_loop());
    if (rho >= 1.0 - 1e-9)
      fail(ErrorCode::UnstableClosedLoop,
           "closed loop spectral radius " + std::to_string(rho) + " is not below 1");
  }
  Mat P0d = spec.prior();
  if (P0d.rows() != nx || P0d.cols() != nx) fail(ErrorCode::DimensionMismatch, "x0_cov size");

  const int N = horizon + 1;
  const bool ctrl = mode == LoopMode::control;
  // s_{i+1} = F s_i + Gam nu_i, o_i = C s_i + D nu_i with nu_i white and unit.
  const Eigen::Index qnu = ctrl ? p : q + p;
  MatT<S> F = (ctrl ? spec.closed_loop() : spec.A).template cast<S>();
  MatT<S> Gam = MatT<S>::Zero(nx, qnu);
  MatT<S> D = MatT<S>::Zero(p, qnu);
  MatT<S> C = spec.C.template cast<S>();
  if (ctrl) {
    Gam = spec.B.template cast<S>();
    D = MatT<S>::Identity(p, p);
  } else {
    Gam.leftCols(q) = (epsilon * spec.B).template cast<S>();
    D.rightCols(p) = MatT<S>::Identity(p, p);
  }
  MatT<S> P0 = P0d.template cast<S>();

  std::vector<MatT<S>> CF(N), CFG(N), Sig(N);
  MatT<S> Fpow = MatT<S>::Identity(nx, nx);
  for (int d = 0; d < N; ++d) {
    CF[d] = C * Fpow;
    CFG[d] = CF[d] * Gam;
    Fpow = F * Fpow;
  }
  Sig[0] = P0;
  MatT<S> GG = Gam * Gam.transpose();
  for (int i = 1; i < N; ++i) Sig[i] = F * Sig[i - 1] * F.transpose() + GG;

  BasicGaussianJoint<S> joint;
  joint.steps = N;
  const Eigen::Index nW = ctrl ? N * p : horizon * q;
  const Eigen::Index nV = ctrl ? 0 : N * p;
  joint.add_block(ctrl ? "E" : "Y", N * p);
  joint.add_block("W", nW);
  if (!ctrl) joint.add_block("V", nV);
  joint.add_block("X0", nx);
  const Eigen::Index dim = N * p + nW + nV + nx;
  joint.mean = BasicGaussianJoint<S>::VecS::Zero(dim);
  joint.cov = MatT<S>::Zero(dim, dim);
  auto& J = joint.cov;
  const Eigen::Index offW = N * p, offV = offW + nW, offX = offV + nV;

  MatT<S> DDt = D * D.transpose();
  for (int i = 0; i < N; ++i) {
    for (int k = 0; k < i; ++k) {
      MatT<S> c = CF[i - k] * Sig[k] * C.transpose() + CFG[i - k - 1] * D.transpose();
      J.block(i * p, k * p, p, p) = c;
    }
    J.block(i * p, i * p, p, p) = C * Sig[i] * C.transpose() + DDt;
    // Cov(o_i, nu_j): C F^{i-1-j} Gam for j < i, D for j = i.
    for (int j = 0; j <= i; ++j) {
      MatT<S> c = j < i ? CFG[i - 1 - j] : D;
      if (ctrl) {
        J.block(i * p, offW + j * p, p, p) = c;
      } else {
        if (j < horizon) J.block(i * p, offW + j * q, p, q) = c.leftCols(q);
        J.block(i * p, offV + j * p, p, p) = c.rightCols(p);
      }
    }
    J.block(i * p, offX, p, nx) = CF[i] * P0;
  }
  J.block(offW, offW, nW, nW).setIdentity();
  if (!ctrl) J.block(offV, offV, nV, nV).setIdentity();
  J.block(offX, offX, nx, nx) = P0;
  for (Eigen::Index r = 0; r < dim; ++r)
    for (Eigen::Index c = r + 1; c < dim; ++c) {
      if (J(r, c) != S(0)) J(c, r) = J(r, c);
      else J(r, c) = J(c, r);
    }
  // Large joints are PSD by construction; the eigen check is only for small ones.
  if (dim <= 400) validate_joint(joint);
  return joint;
}

template <class S>
double entropy_difference_check(const BasicGaussianJoint<S>& joint, const std::string& signal,
                                const std::string& noise,
                                const std::vector<std::string>& message_blocks) {
  double mi = mutual_information(joint, {signal}, message_blocks).nats;
  double hs = differential_entropy(joint, signal).nats;
  double hn = differential_entropy(joint, noise).nats;
  return std::abs(mi - (hs - hn));
}

namespace {

template <class S>
InfoValue entropy_difference(const BasicGaussianJoint<S>& joint, const std::string& signal,
                             const std::string& noise) {
  InfoValue v;
  v.nats = differential_entropy(joint, signal).nats - differential_entropy(joint, noise).nats;
  v.horizon = joint.steps;
  return v;
}

}  // namespace

InfoValue oracle_information(const LtiSystemSpec& system, int horizon, double epsilon) {
  // h(E) - h(W) or h(Y) - h(V): the direct block formula would need the
  // vanishing conditional covariance of the message.
  if (system.mode == LoopMode::control) {
    auto joint = assemble_closed_loop_joint<double>(system, horizon, epsilon, LoopMode::control);
    return entropy_difference(joint, "E", "W");
  }
  if (spectral_radius(system.A) < 1.0) {
    auto joint = assemble_closed_loop_joint<double>(system, horizon, epsilon, LoopMode::filtering);
    return entropy_difference(joint, "Y", "V");
  }
  auto joint = assemble_closed_loop_joint<quad>(system, horizon, epsilon, LoopMode::filtering);
  return entropy_difference(joint, "Y", "V");
}

#define IMSE_INSTANTIATE(S)                                                                     \
  template struct BasicGaussianJoint<S>;                                                        \
  template void validate_joint<S>(const BasicGaussianJoint<S>&);                                \
  template InfoValue differential_entropy<S>(const BasicGaussianJoint<S>&, const std::string&); \
  template InfoValue mutual_information_blocks<S>(const BasicGaussianJoint<S>&,                 \
                                                  const std::string&, const std::string&);      \
  template InfoValue mutual_information<S>(                                                     \
      const BasicGaussianJoint<S>&, const std::vector<std::string>&,                            \
      const std::vector<std::string>&, const std::vector<std::string>&);                        \
  template BasicGaussianJoint<S> assemble_closed_loop_joint<S>(const LtiSystemSpec&, int,       \
                                                               double, LoopMode);               \
  template double entropy_difference_check<S>(const BasicGaussianJoint<S>&, const std::string&, \
                                              const std::string&,                               \
                                              const std::vector<std::string>&);

IMSE_INSTANTIATE(double)
IMSE_INSTANTIATE(quad)

}  // namespace imse
