#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>

#include "fd/config.hpp"
#include "fd/dataset.hpp"
#include "fd/density.hpp"

namespace fd {

// Nuisance components are plain functions so estimated fits and known-truth
// injections share one code path.
using MuFn = std::function<double(const Eigen::RowVectorXd& m, double a,
                                  const Eigen::RowVectorXd& x)>;
using XFn = std::function<double(const Eigen::RowVectorXd& x)>;

// Density parameterization: outcome regression, propensity, and the
// conditional mediator density itself.
struct NuisanceSetDensity {
  MuFn mu;
  XFn pi1;  // P(A=1 | X), clipped to [prob_clip, 1-prob_clip]
  CondDensityModel fm;
};

// Ratio parameterization: the mediator density only ever enters through the
// ratio f(m|a0,x)/f(m|a,x) plus the sequential regressions gamma and kappa.
struct NuisanceSetRatio {
  MuFn mu;
  XFn pi1;
  XFn gamma;             // E[xi(M,X) | A=a0, X=x]
  XFn kappa0, kappa1;    // E[mu(M,a,X) | A=a0, X=x]
  DensityRatioModel fratio;
};

// Fits P(A=1 | X) per cfg.propensity and returns predictions clipped to
// [prob_clip, 1-prob_clip].
XFn fit_propensity(const Dataset& data, const EstimatorConfig& cfg);

// Fits (mu, pi, f_M) with GLM learners; the mediator density kind follows
// cfg.density, defaulting to Bernoulli-logistic for binary M and a Gaussian
// kernel for continuous M.
NuisanceSetDensity fit_density_set(const Dataset& data, const EstimatorConfig& cfg);

// Fits the ratio-parameterization set. The ratio model is Bayes-rule for the
// *-2b estimators, density-backed for *-2a (univariate M only), or the
// supplied per-row table when `plugged` is given.
NuisanceSetRatio fit_ratio_set(const Dataset& data, const EstimatorConfig& cfg,
                               const std::optional<DensityRatioModel>& plugged =
                                   std::nullopt);

// Regression of the pseudo-outcome mu(M_i, a, X_i) on X over rows with
// A_i = a0; avoids integrating over the mediator density.
XFn sequential_kappa(const Dataset& data, const MuFn& mu, int a0, int a,
                     LearnerSpec learner);

// Regression of xi(M_i, X_i) = sum_a mu(M_i, a, X_i) pi(a | X_i) on X over
// rows with A_i = a0.
XFn sequential_gamma(const Dataset& data, const MuFn& mu, const XFn& pi1, int a0,
                     LearnerSpec learner);

// Pointwise derived quantities for the density parameterization.
double xi_fn(const NuisanceSetDensity& q, const Eigen::RowVectorXd& m,
             const Eigen::RowVectorXd& x);
double eta_fn(const NuisanceSetDensity& q, int a0, double a,
              const Eigen::RowVectorXd& x, int grid_size);
double theta_fn(const NuisanceSetDensity& q, int a0, const Eigen::RowVectorXd& x,
                int grid_size);

}  // namespace fd
