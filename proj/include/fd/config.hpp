#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "fd/errors.hpp"

namespace fd {

enum class EstimatorKind {
  Plugin1,    // plug-in, density parameterization
  Plugin2,    // plug-in, ratio parameterization
  OneStep1,   // one-step, density parameterization
  OneStep2a,  // one-step, ratio from estimated densities (or plugged ratios)
  OneStep2b,  // one-step, ratio via Bayes rule
  Tmle1,      // targeted, density parameterization
  Tmle1Mod,   // targeted, non-iterated variant with empirical-joint plug-in
  Tmle2a,     // targeted, ratio from estimated densities (or plugged ratios)
  Tmle2b,     // targeted, ratio via Bayes rule
};

enum class OutcomeKind { Continuous, Binary };

// Design expansion used by every regression-based nuisance fit.
enum class LearnerSpec { MainTerms, WithPairwiseInteractions };

// Functional form of the propensity fit. The linear-probability form is the
// correct specification when treatment probabilities are linear in X, as in
// the weak-overlap studies; there the fit tracks the truth down to prob_clip
// and the inverse-probability weights actually reach 1/prob_clip.
enum class PropensityForm { Logistic, LinearProbability };

// How the univariate conditional mediator density is modeled.
enum class DensityKind { Auto, KernelGaussian, ParametricNormal, BernoulliLogistic };

struct EstimatorConfig {
  int a0 = 1;
  EstimatorKind estimator = EstimatorKind::Tmle1;
  OutcomeKind outcome_kind = OutcomeKind::Continuous;
  LearnerSpec learner = LearnerSpec::MainTerms;
  PropensityForm propensity = PropensityForm::Logistic;
  DensityKind density = DensityKind::Auto;
  int crossfit_folds = 1;  // 1 disables cross-fitting
  std::uint64_t seed = 0;
  int max_tmle_iter = 500;
  double score_tolerance_scale = 1.0;
  double prob_clip = 1e-3;
  int integration_grid_size = 200;
};

// Score-solving tolerance C_n; targeting stops once every tracked component
// of the empirical score is below it.
inline double score_tolerance(const EstimatorConfig& cfg, int n) {
  return cfg.score_tolerance_scale / (std::sqrt(static_cast<double>(n)) *
                                      std::log(static_cast<double>(n)));
}

inline bool uses_ratio_param(EstimatorKind k) {
  return k == EstimatorKind::Plugin2 || k == EstimatorKind::OneStep2a ||
         k == EstimatorKind::OneStep2b || k == EstimatorKind::Tmle2a ||
         k == EstimatorKind::Tmle2b;
}

inline const char* estimator_name(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::Plugin1: return "plugin-1";
    case EstimatorKind::Plugin2: return "plugin-2";
    case EstimatorKind::OneStep1: return "onestep-1";
    case EstimatorKind::OneStep2a: return "onestep-2a";
    case EstimatorKind::OneStep2b: return "onestep-2b";
    case EstimatorKind::Tmle1: return "tmle-1";
    case EstimatorKind::Tmle1Mod: return "tmle-1-mod";
    case EstimatorKind::Tmle2a: return "tmle-2a";
    case EstimatorKind::Tmle2b: return "tmle-2b";
  }
  return "?";
}

inline EstimatorKind estimator_from_name(const std::string& s) {
  if (s == "plugin-1") return EstimatorKind::Plugin1;
  if (s == "plugin-2") return EstimatorKind::Plugin2;
  if (s == "onestep-1") return EstimatorKind::OneStep1;
  if (s == "onestep-2a") return EstimatorKind::OneStep2a;
  if (s == "onestep-2b") return EstimatorKind::OneStep2b;
  if (s == "tmle-1") return EstimatorKind::Tmle1;
  if (s == "tmle-1-mod") return EstimatorKind::Tmle1Mod;
  if (s == "tmle-2a") return EstimatorKind::Tmle2a;
  if (s == "tmle-2b") return EstimatorKind::Tmle2b;
  throw Error(ErrorCode::UnknownName, "unknown estimator '" + s + "'");
}

}  // namespace fd
