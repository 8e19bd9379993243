#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "imse/entropy_knn.hpp"
#include "imse/linalg.hpp"
#include "imse/report.hpp"
#include "imse/rng.hpp"
#include "imse/system.hpp"

namespace imse {

using StateFn = std::function<Vec(int step, const Vec& x)>;
using GainFn = std::function<Mat(int step, const Vec& x)>;

// Control:   X_{i+1} = f(X_i) + b(X_i) E_i,  E_i = g(h(X_i)) + W_i
// Filtering: X_{i+1} = f(X_i) + eps b(X_i) W_i,  Y_i = h(X_i) + V_i
struct NonlinearPlantSpec {
  LoopMode mode = LoopMode::control;
  int state_dim = 1;
  int obs_dim = 1;
  StateFn f;
  GainFn b;
  StateFn h;
  StateFn g;  // controller on outputs, control mode only
  bool g_invertible = false;
  double epsilon = 0.0;
  std::function<Vec(Rng&)> x0_sampler;
  double power_cap = 1e8;
};

// Probes every callback twice and checks shapes. Throws CallbackFailure,
// DimensionMismatch or InvalidArgument.
void validate_nonlinear(const NonlinearPlantSpec& spec);

// Dimension of the channel signal: obs_dim in filtering mode, dim of g's output in control.
int signal_dim(const NonlinearPlantSpec& spec);

struct DecoupledModel {
  StateFn u;      // U_i(x) = g(h(x))
  StateFn f_bar;  // f(x) + b(x) U_i(x)
  std::function<Vec(int step, const Vec& x, const Vec& e)> transition;  // F_i(x, e)
};

DecoupledModel decouple_feedback_noise(const NonlinearPlantSpec& spec);

struct ParticleEnsemble {
  Mat states;  // N x state_dim
  Vec log_weights;
  int step = 0;
  double ess = 0.0;

  int size() const { return static_cast<int>(states.rows()); }
  Vec weights() const;
  void normalize();  // logsumexp(log_weights) = 0, refreshes ess
};

ParticleEnsemble make_ensemble(const Mat& states, int step = 0);

using TransitionKernel = std::function<Vec(int step, const Vec& x, Rng& rng)>;

TransitionKernel filtering_kernel(const NonlinearPlantSpec& spec);
TransitionKernel control_kernel(const DecoupledModel& model, const Vec& error_signal);

// Propagates every particle; weights are unchanged. Throws NonFiniteState.
ParticleEnsemble bayes_time_update(const ParticleEnsemble& posterior, const TransitionKernel& kernel,
                                   Rng& rng);

struct MeasurementOptions {
  bool resample = true;
  double rejuvenation = 0.0;  // Liu-West shrinkage a in (0,1); 0 disables
};

// Reweights by the unit-covariance Gaussian likelihood of `observation` around
// obs_fn(x); resamples systematically when ess < N/2. Throws DegenerateWeights.
ParticleEnsemble bayes_measurement_update(const ParticleEnsemble& prior, const Vec& observation,
                                          const StateFn& obs_fn, Rng& rng,
                                          const MeasurementOptions& options = {});

// Systematic resampling (plus optional Liu-West jitter) when ess < N/2.
void resample_if_needed(ParticleEnsemble& ens, Rng& rng, double rejuvenation = 0.0);

// sum w ||h(x)||^2 - ||sum w h(x)||^2
double normal_correlation_mmse(const ParticleEnsemble& ens, const StateFn& output_fn);

struct PlantTrajectory {
  std::vector<Vec> states;        // X_0..X_n
  std::vector<Vec> signals;       // U_i (control) or Z_i (filtering)
  std::vector<Vec> observations;  // E_i (control) or Y_i (filtering)
  std::vector<Vec> noise;         // W_i (control) or V_i (filtering)
};

PlantTrajectory simulate_plant(const NonlinearPlantSpec& spec, int horizon, Rng& rng);
std::vector<PlantTrajectory> simulate_error_trajectories(const NonlinearPlantSpec& spec,
                                                         int horizon, int trials,
                                                         std::uint64_t seed, int threads = 0);

struct FilterTrace {
  std::vector<double> pmmse;
  std::vector<double> cmmse;
  double min_ess_fraction = 1.0;
};

// Runs the particle recursion along one observation path.
FilterTrace run_particle_filter(const NonlinearPlantSpec& spec,
                                const std::vector<Vec>& observations, int particles, Rng& rng);

// Point-mass grid filter for scalar filtering plants with eps > 0.
FilterTrace grid_filter_reference(const NonlinearPlantSpec& spec,
                                  const std::vector<Vec>& observations, int grid_points,
                                  double lo, double hi);

struct NonlinearOptions {
  int threads = 0;
  double rejuvenation = 0.98;
  double max_abort_fraction = 0.10;
};

RateReport nonlinear_rate_report(const NonlinearPlantSpec& spec, int horizon, int particles,
                                 int trials, std::uint64_t seed,
                                 const NonlinearOptions& options = {});

// Linear-Gaussian plant wrapped as callbacks (for consistency checks).
NonlinearPlantSpec linear_as_nonlinear(const LtiSystemSpec& spec, double epsilon = 0.0);

}  // namespace imse
