#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fd/config.hpp"
#include "fd/dataset.hpp"
#include "fd/nuisance.hpp"

namespace fd::sim {

// Built-in data generating processes. The univ-* designs use a scalar
// uniform covariate with linear/logistic conditionals; weak-overlap-* are the
// same laws with propensities spanning (0.001, 0.999); misspec-* add
// treatment-covariate and mediator-covariate interactions so main-terms
// working models are wrong; crossfit-* use ten covariates with polynomial
// conditionals.
enum class DgpName {
  UnivBinary,
  UnivContinuous,
  Bivariate,
  Quadrivariate,
  WeakOverlapBinary,
  WeakOverlapContinuous,
  WeakOverlapBivariate,
  MisspecBinary,
  MisspecContinuous,
  CrossfitBinary,
  CrossfitContinuous,
};

std::string dgp_name(DgpName name);
DgpName dgp_from_name(const std::string& s);  // kebab-case, e.g. "univ-binary"
const std::vector<std::string>& dgp_names();  // enum order

MediatorKind dgp_mediator_kind(DgpName name);
int dgp_x_dim(DgpName name);
int dgp_m_dim(DgpName name);

// Propensity fit used by default when studying this design. The weak-overlap
// designs draw A from a probability linear in X, and their reference results
// depend on the fitted propensity reaching the clipping boundary, so they fit
// the correctly specified linear-probability form; everywhere else the
// working model is logistic.
PropensityForm dgp_propensity_form(DgpName name);

struct DgpSpec {
  DgpName name = DgpName::UnivBinary;
  int n = 1000;
  std::uint64_t seed = 0;
};

// Draws one dataset. Bit-reproducible: row i of variable v comes from a
// counter-based stream keyed by (seed, v), so results do not depend on the
// thread count or on generation order.
Dataset generate(const DgpSpec& spec);

// Fixed seed for target-value Monte Carlo so truths are reproducible across
// runs and machines.
inline constexpr std::uint64_t kTruthSeed = 1000003;

struct TruthValue {
  double psi = 0;
  double se = 0;  // Monte Carlo standard error
};

// Monte Carlo value of the target functional under the generating law. The
// treatment and mediator integrals are closed form for every built-in design,
// so the only Monte Carlo error is over the covariate draw. Values are cached
// per (name, a0, draws, seed).
TruthValue truth_detail(DgpName name, int a0, std::int64_t draws = 1000000,
                        std::uint64_t seed = kTruthSeed);
double truth_psi(DgpName name, int a0, std::int64_t draws = 1000000,
                 std::uint64_t seed = kTruthSeed);
// E[Y(1)] - E[Y(0)] with shared covariate draws.
double truth_ace(DgpName name, std::int64_t draws = 1000000,
                 std::uint64_t seed = kTruthSeed);

// Known-truth nuisances for the univariate designs (density parameterization)
// and for all E[Y|M,A,X]-linear designs (ratio parameterization); used to
// check estimator unbiasedness with estimation error removed. The crossfit-*
// designs have no closed-form set and throw.
NuisanceSetDensity oracle_density_set(DgpName name);
NuisanceSetRatio oracle_ratio_set(DgpName name, int a0, const Dataset& data);

struct SimRow {
  std::string estimator;
  int n = 0;
  double bias = 0, sd = 0, mse = 0, coverage = 0, width = 0;
  int failed = 0;
};

struct SimReport {
  std::string dgp;
  double truth = 0;
  int replicates = 0;
  std::vector<SimRow> rows;

  // Header "estimator,n,bias,sd,mse,coverage,width,failed" plus one row per
  // estimator, in request order.
  std::string to_csv() const;
};

struct StudyConfig {
  int replicates = 200;
  LearnerSpec learner = LearnerSpec::MainTerms;
  // Unset means dgp_propensity_form(base.name).
  std::optional<PropensityForm> propensity{};
  DensityKind density = DensityKind::Auto;
  int crossfit_folds = 1;
  bool oracle_nuisances = false;  // inject known-truth sets instead of fitting
  std::int64_t truth_draws = 1000000;
  std::uint64_t truth_seed = kTruthSeed;
  double prob_clip = 1e-3;
  int integration_grid_size = 200;
};

// Monte Carlo study of the average effect: replicate r draws a dataset with
// seed base.seed + r, runs every requested estimator at a0 = 1 and a0 = 0,
// and differences them. Replicates where an estimator throws or returns a
// non-finite value are counted in `failed` and excluded from its summaries.
SimReport run_study(const DgpSpec& base,
                    const std::vector<EstimatorKind>& estimators,
                    const StudyConfig& sc);

}  // namespace fd::sim
