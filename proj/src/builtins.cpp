#include "imse/scenario.hpp"

namespace imse {

const std::vector<BuiltinScenario>& builtin_scenarios() {
  static const std::vector<BuiltinScenario> catalog = {
      {"lti_scalar_log2", "scalar loop A=2, G=-1.8: rate equals log 2",
       R"({"schema": 1, "name": "lti_scalar_log2", "kind": "lti_control",
           "system": {"A": 2, "B": 1, "C": -1.8}, "horizon": 400, "seed": 1})"},
      {"lti_filtering_scalar", "noise-free scalar filtering of A=2: bounds 0.375 and 1.5 around log 2",
       R"({"schema": 1, "name": "lti_filtering_scalar", "kind": "lti_filtering",
           "system": {"A": 2, "B": 1, "C": 1}, "epsilon": 0.0, "horizon": 400, "seed": 2})"},
      {"lti_footnote_identity", "two unstable modes: 2 sum log|lambda| against sum log(1 + eta)",
       R"({"schema": 1, "name": "lti_footnote_identity", "kind": "lti_control",
           "system": {"A": [[1.5, 0.3], [0, 1.2]], "B": [[1, 0], [0, 1]],
                      "C": [[-1.3, -0.3], [0, -1.0]]},
           "horizon": 300, "seed": 3})"},
      {"oracle_entropy_difference", "oracle information against h(E) - h(W) on a 2-state loop",
       R"({"schema": 1, "name": "oracle_entropy_difference", "kind": "oracle_crosscheck",
           "system": {"A": [[1.5, 0.3], [0, 0.5]], "B": [[1], [1]], "C": [[-1.2, 0]]},
           "horizon": 40, "seed": 4, "tolerance": 0.1})"},
      {"channel_constant_message", "constant Gaussian message, two uses: 0.4167 <= 0.5493 <= 0.75",
       R"({"schema": 1, "name": "channel_constant_message", "kind": "channel",
           "system": {"message_cov": 1, "F": 1}, "horizon": 1, "seed": 5,
           "estimator": "closed_form"})"},
      {"ltv_period2_bode", "period-2 scalar plant (3, 0.5): rate 0.5 log 1.5",
       R"({"schema": 1, "name": "ltv_period2_bode", "kind": "ltv_control",
           "system": {"A": {"period": 2, "matrices": [3, 0.5]}, "B": 1,
                      "C": {"period": 2, "matrices": [-2.5, 0]}},
           "horizon": 400, "seed": 6})"},
      {"lem46_epsilon_sweep", "diag(0.5, 2) filtering: stable block ~ eps^2, antistable block -> 3",
       R"({"schema": 1, "name": "lem46_epsilon_sweep", "kind": "lti_filtering",
           "system": {"A": {"diag": [0.5, 2]}, "B": {"diag": [1, 1]}, "C": {"diag": [1, 1]}},
           "epsilon": 0.01, "epsilon_sweep": [0.1, 0.01, 0.001], "horizon": 200, "seed": 7})"},
      {"nonlinear_linear_consistency", "particle bounds on the linear A=2 loop (targets 0.75 / 3)",
       R"({"schema": 1, "name": "nonlinear_linear_consistency", "kind": "nonlinear_control",
           "system": {"model": "linear", "A": 2, "B": 1, "C": -1.8},
           "horizon": 30, "particles": 2000, "trials": 20, "seed": 8})"},
      {"capacity_scalar", "finite-horizon capacity of the realized input covariances",
       R"({"schema": 1, "name": "capacity_scalar", "kind": "lti_control",
           "system": {"A": 1.5, "B": 1, "C": -1}, "horizon": 200, "seed": 9})"},
      {"oracle_crosscheck_scalar", "oracle I(E;X0)/(n+1) against log 2 at n = 400",
       R"({"schema": 1, "name": "oracle_crosscheck_scalar", "kind": "oracle_crosscheck",
           "system": {"A": 2, "B": 1, "C": -1.8}, "horizon": 400, "seed": 10})"},
      {"nonlinear_tanh_control", "tanh-perturbed unstable plant under linear feedback",
       R"({"schema": 1, "name": "nonlinear_tanh_control", "kind": "nonlinear_control",
           "system": {"model": "tanh-perturbed-linear", "A": 2, "B": 1, "C": -1.8,
                      "coefficients": {"alpha": 0.05}},
           "horizon": 30, "particles": 1000, "trials": 20, "seed": 11})"},
      {"channel_feedback_regression", "A=2 loop as a feedback channel, regression MMSE estimates",
       R"({"schema": 1, "name": "channel_feedback_regression", "kind": "channel",
           "system": {"lti": {"A": 2, "B": 1, "C": -1.8}}, "horizon": 10, "seed": 12,
           "estimator": "regression", "trials": 4000})"},
      {"nonlinear_cubic_filtering", "stable plant seen through a cubic sensor",
       R"({"schema": 1, "name": "nonlinear_cubic_filtering", "kind": "nonlinear_filtering",
           "system": {"model": "cubic-sensor", "A": 0.9, "B": 1, "C": 1,
                      "coefficients": {"beta": 0.1}},
           "epsilon": 0.5, "horizon": 30, "particles": 1000, "trials": 10, "seed": 13})"},
      {"ltv_filtering_periodic", "noise-free filtering of the period-2 plant (3, 0.5)",
       R"({"schema": 1, "name": "ltv_filtering_periodic", "kind": "ltv_filtering",
           "system": {"A": {"period": 2, "matrices": [3, 0.5]}, "B": 1, "C": 1},
           "horizon": 200, "seed": 14})"},
  };
  return catalog;
}

const BuiltinScenario* find_builtin(const std::string& name) {
  for (const auto& b : builtin_scenarios())
    if (b.name == name) return &b;
  return nullptr;
}

}  // namespace imse
