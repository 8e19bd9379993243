#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "imse/linalg.hpp"

namespace imse {

enum class LoopMode { control, filtering };

const char* mode_name(LoopMode mode);

// Control: X_{i+1} = A X_i + B E_i, E_i = C X_i + W_i (C plays G).
// Filtering: X_{i+1} = A X_i + eps B W_i, Y_i = C X_i + V_i (C plays H).
struct LtiSystemSpec {
  Mat A;
  Mat B;
  Mat C;
  Mat x0_cov;  // empty means identity
  LoopMode mode = LoopMode::control;

  Mat prior() const;
  Mat closed_loop() const { return A + B * C; }
};

void validate_lti(const LtiSystemSpec& spec);

// Posterior covariance after observing C X + unit white noise (Joseph form).
Mat kalman_correct(const Mat& P_prior, const Mat& C);

class MatrixSequence {
 public:
  enum class Kind { constant, periodic, list, callback };

  MatrixSequence() = default;
  static MatrixSequence constant(Mat M);
  static MatrixSequence periodic(std::vector<Mat> cycle);
  static MatrixSequence list(std::vector<Mat> items);
  static MatrixSequence callback(std::function<Mat(int)> fn, Eigen::Index rows,
                                 Eigen::Index cols);

  Mat at(int i) const;
  Kind kind() const { return kind_; }
  std::optional<int> period() const;
  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return cols_; }
  bool empty() const { return rows_ == 0 && cols_ == 0 && items_.empty() && !fn_; }

 private:
  Kind kind_ = Kind::constant;
  std::vector<Mat> items_;
  std::function<Mat(int)> fn_;
  Eigen::Index rows_ = 0, cols_ = 0;
};

// Common period of several sequences (1 when all constant), if any.
std::optional<int> common_period(const std::vector<const MatrixSequence*>& seqs);

struct DeclaredSplit {
  MatrixSequence T;  // T_i maps x to [stable; antistable] coordinates
  int unstable_dim = 0;
};

struct LtvSystemSpec {
  MatrixSequence A;
  MatrixSequence B;
  MatrixSequence C;
  Mat x0_cov;
  LoopMode mode = LoopMode::control;
  std::optional<DeclaredSplit> declared_split;
  double norm_cap = 1e8;

  Eigen::Index state_dim() const { return A.rows(); }
  Mat prior() const;
  bool is_constant() const;
  LtiSystemSpec as_lti() const;
};

LtvSystemSpec ltv_from_lti(const LtiSystemSpec& spec);

struct MmseSequence {
  std::vector<double> pmmse;  // tr(C_i P_i^- C_i^T)
  std::vector<double> cmmse;  // tr(C_i P_i C_i^T)
  std::vector<double> info;   // 1/2 log det(I + C_i P_i^- C_i^T), the per-step information
  Mat final_prior;            // P^-_{n+1}
};

// Riccati recursion for steps 0..horizon started from the spec prior. Control
// mode propagates P^-_{i+1} = A_i P_i A_i^T, filtering adds eps^2 B_i B_i^T.
MmseSequence riccati_mmse(const LtvSystemSpec& spec, int horizon, double epsilon);

}  // namespace imse
