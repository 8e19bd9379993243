#pragma once

#include <boost/multiprecision/eigen.hpp>
#include <boost/multiprecision/float128.hpp>
#include <string>
#include <utility>
#include <vector>

#include "imse/linalg.hpp"
#include "imse/system.hpp"

namespace imse {

using quad = boost::multiprecision::float128;

struct BlockRange {
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
};

template <class S>
struct BasicGaussianJoint {
  using MatS = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  using VecS = Eigen::Matrix<S, Eigen::Dynamic, 1>;

  VecS mean;
  MatS cov;
  std::vector<std::pair<std::string, BlockRange>> blocks;
  int steps = 0;  // number of time steps n+1 covered by the joint

  Eigen::Index dim() const { return cov.rows(); }
  BlockRange block(const std::string& label) const;
  bool has_block(const std::string& label) const;
  void add_block(const std::string& label, Eigen::Index size);
};

using GaussianJoint = BasicGaussianJoint<double>;
using GaussianJointQ = BasicGaussianJoint<quad>;

struct InfoValue {
  double nats = 0.0;
  int horizon = 0;  // n+1
  double rate() const { return horizon > 0 ? nats / horizon : 0.0; }
};

// Symmetry, block coverage and (for dim <= 400) eigenvalue floor.
template <class S>
void validate_joint(const BasicGaussianJoint<S>& joint);

template <class S>
InfoValue differential_entropy(const BasicGaussianJoint<S>& joint, const std::string& block);

template <class S>
InfoValue mutual_information_blocks(const BasicGaussianJoint<S>& joint, const std::string& a,
                                    const std::string& b);

// I(A; B | given) for unions of blocks.
template <class S>
InfoValue mutual_information(const BasicGaussianJoint<S>& joint, const std::vector<std::string>& a,
                             const std::vector<std::string>& b,
                             const std::vector<std::string>& given = {});

// Exact covariance of (E, W, X0) in control mode or (Y, W, V, X0) in filtering
// mode for steps 0..horizon. The filtering W block holds the unscaled process
// noise, so eps = 0 keeps the joint non-singular.
template <class S>
BasicGaussianJoint<S> assemble_closed_loop_joint(const LtiSystemSpec& system, int horizon,
                                                 double epsilon, LoopMode mode);

template <class S>
double entropy_difference_check(const BasicGaussianJoint<S>& joint, const std::string& signal,
                                const std::string& noise,
                                const std::vector<std::string>& message_blocks);

// I(E;X0) in control mode, I(Y;X0,W) in filtering mode, from the assembled
// covariance. Filtering with an unstable open loop is evaluated in quad
// precision, which bounds the usable horizon (about 4^n must stay well below 1e34).
InfoValue oracle_information(const LtiSystemSpec& system, int horizon, double epsilon = 0.0);

}  // namespace imse
