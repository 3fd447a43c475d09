#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "fd/estimators.hpp"

namespace fd {

// Row partition for K-fold cross-fitting.
struct FoldPlan {
  int k = 1;
  std::vector<int> fold_of;                 // per-row label in {1..k}
  std::vector<std::vector<int>> fold_rows;  // fold_rows[j]: rows with label j+1

  static FoldPlan build(int n, int k, std::uint64_t seed);
  std::vector<int> complement(int fold) const;  // rows outside fold_rows[fold]
};

Dataset subset_rows(const Dataset& data, const std::vector<int>& rows);

// Pooled targeting: one workspace per fold, each holding that fold's rows
// evaluated under nuisances fit on the complement. Every fluctuation
// parameter is fit once on the union of rows (offsets and clever covariates
// coming from the owning fold) and applied to every fold, so a single fold
// covering all rows reduces to plain targeting.
EstimateResult tmle_psi1_pooled(std::vector<Psi1Workspace>& ws,
                                const std::vector<std::vector<int>>& fold_rows,
                                int n_total, const EstimatorConfig& cfg);
EstimateResult tmle_psi1_mod_pooled(std::vector<Psi1Workspace>& ws,
                                    const std::vector<std::vector<int>>& fold_rows,
                                    int n_total, const EstimatorConfig& cfg);

// Re-estimates gamma for one fold after the outcome and propensity updates
// (eps_y, eps_a); returns fitted values at that fold's rows. Cross-fitting
// regresses on the complement rows, the plain path on the fold itself.
using GammaRefit = std::function<Eigen::VectorXd(int fold, const Psi2State& s,
                                                 double eps_y, double eps_a)>;

EstimateResult tmle_psi2_pooled(std::vector<Psi2State>& states,
                                const std::vector<std::vector<int>>& fold_rows,
                                int n_total, const EstimatorConfig& cfg,
                                const GammaRefit& refit_gamma);

// K-fold driver: splits rows by cfg.seed, fits each fold's nuisances on the
// complement, and combines fold estimates as their unweighted average with a
// pooled influence function.
EstimateResult crossfit_estimate(const Dataset& data, const EstimatorConfig& cfg,
                                 const std::optional<DensityRatioModel>& plugged =
                                     std::nullopt);

// Same drivers with caller-prepared per-fold nuisance sets (qs[j] serves
// fold_rows[j]). For the Plugged ratio kind, qs[j].fratio must index the
// fold's rows in fold order.
EstimateResult crossfit_with_density(const Dataset& data,
                                     const EstimatorConfig& cfg,
                                     const FoldPlan& plan,
                                     const std::vector<NuisanceSetDensity>& qs);
EstimateResult crossfit_with_ratio(const Dataset& data, const EstimatorConfig& cfg,
                                   const FoldPlan& plan,
                                   const std::vector<NuisanceSetRatio>& qs);

}  // namespace fd
