#include "imse/system.hpp"

#include <cmath>
#include <numeric>

#include "imse/errors.hpp"

namespace imse {

const char* mode_name(LoopMode mode) {
  return mode == LoopMode::control ? "control" : "filtering";
}

Mat LtiSystemSpec::prior() const {
  return x0_cov.size() == 0 ? Mat::Identity(A.rows(), A.rows()) : x0_cov;
}

void validate_lti(const LtiSystemSpec& spec) {
  const Eigen::Index n = spec.A.rows();
  if (n == 0 || spec.A.cols() != n) fail(ErrorCode::DimensionMismatch, "A must be square");
  if (spec.B.rows() != n) fail(ErrorCode::DimensionMismatch, "B must have as many rows as A");
  if (spec.C.cols() != n) fail(ErrorCode::DimensionMismatch, "C must have as many columns as A");
  if (spec.mode == LoopMode::control && spec.C.rows() != spec.B.cols())
    fail(ErrorCode::DimensionMismatch, "control loop needs G with as many rows as B has columns");
  Mat P0 = spec.prior();
  if (P0.rows() != n || P0.cols() != n) fail(ErrorCode::DimensionMismatch, "x0_cov size");
  if (!is_psd(P0)) fail(ErrorCode::NotPSD, "x0_cov is not symmetric PSD");
  for (const auto& lam : eigenvalues(spec.A))
    if (std::abs(std::abs(lam) - 1.0) <= 1e-8)
      fail(ErrorCode::MarginalEigenvalue, "A has an eigenvalue on the unit circle");
  if (spec.mode == LoopMode::control) {
    double rho = spectral_radius(spec.closed_loop());
    if (rho >= 1.0 - 1e-9)
      fail(ErrorCode::UnstableClosedLoop,
           "closed loop A+BG has spectral radius " + std::to_string(rho));
  }
}

Mat kalman_correct(const Mat& P_prior, const Mat& C) {
  const Eigen::Index m = C.rows();
  if (m == 0) return P_prior;
  Mat S = C * P_prior * C.transpose() + Mat::Identity(m, m);
  Mat K = S.llt().solve(C * P_prior).transpose();
  Mat IKC = Mat::Identity(P_prior.rows(), P_prior.rows()) - K * C;
  return symmetrize(IKC * P_prior * IKC.transpose() + K * K.transpose());
}

MatrixSequence MatrixSequence::constant(Mat M) {
  MatrixSequence s;
  s.kind_ = Kind::constant;
  s.rows_ = M.rows();
  s.cols_ = M.cols();
  s.items_.push_back(std::move(M));
  return s;
}

MatrixSequence MatrixSequence::periodic(std::vector<Mat> cycle) {
  if (cycle.empty()) fail(ErrorCode::InvalidArgument, "periodic sequence needs matrices");
  MatrixSequence s;
  s.kind_ = cycle.size() == 1 ? Kind::constant : Kind::periodic;
  s.rows_ = cycle[0].rows();
  s.cols_ = cycle[0].cols();
  for (const auto& m : cycle)
    if (m.rows() != s.rows_ || m.cols() != s.cols_)
      fail(ErrorCode::DimensionMismatch, "periodic matrices differ in shape");
  s.items_ = std::move(cycle);
  return s;
}

MatrixSequence MatrixSequence::list(std::vector<Mat> items) {
  if (items.empty()) fail(ErrorCode::InvalidArgument, "explicit sequence is empty");
  MatrixSequence s;
  s.kind_ = Kind::list;
  s.rows_ = items[0].rows();
  s.cols_ = items[0].cols();
  for (const auto& m : items)
    if (m.rows() != s.rows_ || m.cols() != s.cols_)
      fail(ErrorCode::DimensionMismatch, "sequence matrices differ in shape");
  s.items_ = std::move(items);
  return s;
}

MatrixSequence MatrixSequence::callback(std::function<Mat(int)> fn, Eigen::Index rows,
                                        Eigen::Index cols) {
  MatrixSequence s;
  s.kind_ = Kind::callback;
  s.fn_ = std::move(fn);
  s.rows_ = rows;
  s.cols_ = cols;
  return s;
}

Mat MatrixSequence::at(int i) const {
  if (i < 0) fail(ErrorCode::InvalidArgument, "negative step index");
  switch (kind_) {
    case Kind::constant:
      return items_.at(0);
    case Kind::periodic:
      return items_[static_cast<std::size_t>(i) % items_.size()];
    case Kind::list:
      if (static_cast<std::size_t>(i) >= items_.size())
        fail(ErrorCode::HorizonMismatch,
             "explicit sequence has no entry for step " + std::to_string(i));
      return items_[static_cast<std::size_t>(i)];
    case Kind::callback: {
      Mat M;
      try {
        M = fn_(i);
      } catch (const std::exception& e) {
        fail(ErrorCode::CallbackFailure, std::string("sequence callback: ") + e.what());
      }
      if (M.rows() != rows_ || M.cols() != cols_)
        fail(ErrorCode::DimensionMismatch, "sequence callback returned wrong shape");
      return M;
    }
  }
  return {};
}

std::optional<int> MatrixSequence::period() const {
  if (kind_ == Kind::constant) return 1;
  if (kind_ == Kind::periodic) return static_cast<int>(items_.size());
  return std::nullopt;
}

std::optional<int> common_period(const std::vector<const MatrixSequence*>& seqs) {
  int p = 1;
  for (const auto* s : seqs) {
    if (s->empty()) continue;
    auto q = s->period();
    if (!q) return std::nullopt;
    p = std::lcm(p, *q);
  }
  return p;
}

Mat LtvSystemSpec::prior() const {
  return x0_cov.size() == 0 ? Mat::Identity(A.rows(), A.rows()) : x0_cov;
}

bool LtvSystemSpec::is_constant() const {
  return A.kind() == MatrixSequence::Kind::constant && B.kind() == MatrixSequence::Kind::constant &&
         C.kind() == MatrixSequence::Kind::constant;
}

LtiSystemSpec LtvSystemSpec::as_lti() const {
  if (!is_constant()) fail(ErrorCode::InvalidArgument, "sequence is not constant");
  LtiSystemSpec s;
  s.A = A.at(0);
  s.B = B.at(0);
  s.C = C.at(0);
  s.x0_cov = x0_cov;
  s.mode = mode;
  return s;
}

LtvSystemSpec ltv_from_lti(const LtiSystemSpec& spec) {
  LtvSystemSpec s;
  s.A = MatrixSequence::constant(spec.A);
  s.B = MatrixSequence::constant(spec.B);
  s.C = MatrixSequence::constant(spec.C);
  s.x0_cov = spec.x0_cov;
  s.mode = spec.mode;
  return s;
}

}  // namespace imse

namespace imse {

MmseSequence riccati_mmse(const LtvSystemSpec& spec, int horizon, double epsilon) {
  if (horizon < 0) fail(ErrorCode::InvalidArgument, "negative horizon");
  MmseSequence out;
  out.pmmse.reserve(static_cast<std::size_t>(horizon) + 1);
  out.cmmse.reserve(static_cast<std::size_t>(horizon) + 1);
  out.info.reserve(static_cast<std::size_t>(horizon) + 1);
  Mat Pm = spec.prior();
  for (int i = 0; i <= horizon; ++i) {
    Mat C = spec.C.at(i);
    Mat A = spec.A.at(i);
    Mat S = C * Pm * C.transpose();
    out.pmmse.push_back(S.trace());
    out.info.push_back(0.5 * logdet_spd(S + Mat::Identity(S.rows(), S.rows())));
    Mat P = kalman_correct(Pm, C);
    out.cmmse.push_back((C * P * C.transpose()).trace());
    Pm = A * P * A.transpose();
    if (spec.mode == LoopMode::filtering && epsilon != 0.0) {
      Mat B = spec.B.at(i);
      Pm += epsilon * epsilon * B * B.transpose();
    }
    Pm = symmetrize(Pm);
    if (!Pm.allFinite()) fail(ErrorCode::NumericalBlowup, "Riccati recursion overflowed");
  }
  out.final_prior = Pm;
  return out;
}

}  // namespace imse
