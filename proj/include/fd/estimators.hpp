#pragma once

#include <optional>

#include "fd/eif.hpp"

namespace fd {

// Full pipeline: validates the config, fits nuisances (cross-fitted when
// cfg.crossfit_folds >= 2), and dispatches to the requested estimator.
// `plugged` supplies externally computed density ratios for the -2a family.
EstimateResult estimate(const Dataset& data, const EstimatorConfig& cfg,
                        const std::optional<DensityRatioModel>& plugged =
                            std::nullopt);

// Entry points taking prepared nuisances (also used for known-truth
// injections). a0 and tuning live in cfg.
EstimateResult plugin_estimate_psi1(const NuisanceSetDensity& q,
                                    const Dataset& data,
                                    const EstimatorConfig& cfg);
EstimateResult plugin_estimate_psi2(const NuisanceSetRatio& q,
                                    const Dataset& data,
                                    const EstimatorConfig& cfg);
EstimateResult onestep_psi1(const NuisanceSetDensity& q, const Dataset& data,
                            const EstimatorConfig& cfg);
EstimateResult onestep_psi2(const NuisanceSetRatio& q, const Dataset& data,
                            const EstimatorConfig& cfg);
// Iterative targeting; dispatches on mediator kind and outcome kind.
EstimateResult tmle_psi1(const NuisanceSetDensity& q, const Dataset& data,
                         const EstimatorConfig& cfg);
// Non-iterated variant: one mediator-density update, one outcome update, and
// the empirical-joint plug-in (binary mediator only).
EstimateResult tmle_psi1_mod(const NuisanceSetDensity& q, const Dataset& data,
                             const EstimatorConfig& cfg);
// Single-pass targeting in the ratio parameterization.
EstimateResult tmle_psi2(const NuisanceSetRatio& q, const Dataset& data,
                         const EstimatorConfig& cfg);

// Row-level state for the ratio parameterization (mirrors Psi1Workspace).
struct Psi2State {
  int a0 = 1;
  int n = 0;
  Eigen::VectorXd a_col, y_col;
  Eigen::VectorXd mu_arm[2];  // mu(M_i, a, X_i)
  Eigen::VectorXd mu_own;
  Eigen::VectorXd pi1;
  Eigen::VectorXd gamma_v, kap0, kap1;
  Eigen::VectorXd w_ratio;      // f-ratio at (M_i, A_i, X_i)
  Eigen::VectorXd w_ratio_arm[2];  // f-ratio at (M_i, a, X_i); binary-Y targeting

  Eigen::VectorXd pi_a0() const;
  Eigen::VectorXd xi() const;  // xi(M_i, X_i) from mu_arm and pi1
  EifParts eif(double psi) const;
};

Psi2State build_psi2_state(const NuisanceSetRatio& q, const Dataset& data,
                           int a0, bool need_arm_ratios);

// Empirical mean of each fluctuation loss along its submodel at parameter
// eps, taken at the current state. Targeting solves the corresponding score
// equations; these evaluators exist so the derivative-vs-score relationship
// stays testable.
namespace fluct {
// -log Bernoulli likelihood of A under the propensity submodel.
double loss_pi(const Psi1Workspace& w, double eps);
// -1(A=a0) log Bernoulli of M under the mediator-density submodel.
double loss_fm_binary(const Psi1Workspace& w, double eps);
// -1(A=a0) log of the multiplicatively fluctuated continuous density.
double loss_fm_continuous(const Psi1Workspace& w, double eps);
// ratio-weighted squared error of Y around the shifted outcome regression.
double loss_mu_quadratic(const Psi1Workspace& w, double eps);
// ratio-tilted Bernoulli log-loss of Y (binary outcome submodel).
double loss_mu_logistic(const Psi1Workspace& w, double eps);

double loss_mu2_quadratic(const Psi2State& s, double eps);
double loss_mu2_logistic(const Psi2State& s, double eps);
double loss_pi2(const Psi2State& s, double eps);
double loss_gamma2(const Psi2State& s, double eps);
}  // namespace fluct

}  // namespace fd
