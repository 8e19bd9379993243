#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "imse/gaussian_info.hpp"
#include "imse/linalg.hpp"
#include "imse/rng.hpp"
#include "imse/system.hpp"

namespace imse {

// Phi_i = F_i M + sum_{j<i} K_{i,j} Y_j with M ~ N(0, message_cov).
struct LinearChannel {
  Mat message_cov;
  std::function<Mat(int)> F;
  std::function<Mat(int, int)> K;  // empty when there is no feedback
};

using InputFn = std::function<Vec(const Vec& message, const std::vector<Vec>& past, int step)>;
using MessageSampler = std::function<Vec(Rng&)>;

struct ChannelSpec {
  int dim = 1;
  bool feedback = false;
  MessageSampler message_sampler;
  InputFn input_fn;
  Mat noise_cov;  // empty means identity
  double power_cap = 1e8;
  std::optional<LinearChannel> conjugate;
};

ChannelSpec make_linear_channel(const LinearChannel& lc, int dim);

// The LTI control loop viewed as a channel carrying X0: Phi_i = G X_i.
LinearChannel lti_control_channel(const LtiSystemSpec& spec, int horizon);

struct ChannelEnsemble {
  int horizon = 0;
  int trials = 0;
  std::vector<Vec> messages;                // per trial
  std::vector<std::vector<Vec>> inputs;     // [trial][step]
  std::vector<std::vector<Vec>> outputs;    // [trial][step]
};

ChannelEnsemble simulate_channel(const ChannelSpec& spec, int horizon, int trials,
                                 std::uint64_t seed, int threads = 0);

enum class Estimator { closed_form, regression, particle };
const char* estimator_name(Estimator e);

struct EstimatorOptions {
  int particles = 2000;
  int regression_degree = 1;
  int threads = 0;
};

struct MmseLedger {
  std::vector<double> cmmse;
  std::vector<double> pmmse;
  std::vector<double> stderr_cmmse;
  std::vector<double> stderr_pmmse;
  int horizon = 0;  // final step index n
  int trials = 0;
  std::string estimator;
  std::string quality;  // "exact" or "upper-bound" for fitted estimators
  int steps() const { return horizon + 1; }
};

MmseLedger estimate_mmse_ledger(const ChannelSpec& spec, int horizon, int trials,
                                std::uint64_t seed, Estimator estimator,
                                const EstimatorOptions& options = {});

enum class Verdict { holds, violated, inconclusive };
const char* verdict_name(Verdict v);

struct SandwichReport {
  double lower = 0.0;
  double info = 0.0;
  double upper = 0.0;
  double margin_lower = 0.0;  // info - lower
  double margin_upper = 0.0;  // upper - info
  double sigma_lower = 0.0;
  double sigma_upper = 0.0;
  double rate_lower = 0.0;  // divided by 2(n+1) form, i.e. per step
  double rate_info = 0.0;
  double rate_upper = 0.0;
  Verdict verdict = Verdict::inconclusive;
};

SandwichReport verify_sandwich(const MmseLedger& ledger, const InfoValue& info);

// Exact joint of (M, Y_0..Y_n) for a linear channel, blocks "M" and "Y".
GaussianJoint channel_joint(const LinearChannel& lc, int dim, int horizon);
InfoValue channel_information(const LinearChannel& lc, int dim, int horizon);

}  // namespace imse
