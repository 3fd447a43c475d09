#include "fd/estimators.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "fd/crossfit.hpp"
#include "fd/errors.hpp"
#include "fd/glm.hpp"

namespace fd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_univariate(const Dataset& data) {
  if (data.mediator_kind == MediatorKind::Multivariate)
    throw Error(ErrorCode::UnsupportedKind,
                "density parameterization needs a univariate mediator; use a "
                "ratio-parameterization estimator");
}

std::vector<std::vector<int>> single_fold(int n) {
  std::vector<std::vector<int>> rows(1);
  rows[0].resize(n);
  std::iota(rows[0].begin(), rows[0].end(), 0);
  return rows;
}

}  // namespace

EstimateResult plugin_estimate_psi1(const NuisanceSetDensity& q,
                                    const Dataset& data,
                                    const EstimatorConfig& cfg) {
  require_univariate(data);
  Psi1Workspace w =
      Psi1Workspace::build(q, data, cfg.a0, cfg.integration_grid_size);
  const double psi = w.theta().mean();
  return finish_estimate(psi, w.eif(psi));
}

EstimateResult plugin_estimate_psi2(const NuisanceSetRatio& q,
                                    const Dataset& data,
                                    const EstimatorConfig& cfg) {
  const double psi = plugin_psi2(q, data);
  return finish_estimate(psi, eif_ratio(q, data, cfg.a0, psi));
}

EstimateResult onestep_psi1(const NuisanceSetDensity& q, const Dataset& data,
                            const EstimatorConfig& cfg) {
  require_univariate(data);
  Psi1Workspace w =
      Psi1Workspace::build(q, data, cfg.a0, cfg.integration_grid_size);
  const double psi_plugin = w.theta().mean();
  const double psi = psi_plugin + w.eif(psi_plugin).total().mean();
  return finish_estimate(psi, w.eif(psi));
}

EstimateResult onestep_psi2(const NuisanceSetRatio& q, const Dataset& data,
                            const EstimatorConfig& cfg) {
  const double psi_plugin = plugin_psi2(q, data);
  const double psi =
      psi_plugin + eif_ratio(q, data, cfg.a0, psi_plugin).total().mean();
  return finish_estimate(psi, eif_ratio(q, data, cfg.a0, psi));
}

EstimateResult tmle_psi1(const NuisanceSetDensity& q, const Dataset& data,
                         const EstimatorConfig& cfg) {
  require_univariate(data);
  if (cfg.outcome_kind == OutcomeKind::Binary &&
      data.mediator_kind != MediatorKind::Binary)
    throw Error(ErrorCode::UnsupportedKind,
                "binary-outcome targeting needs a binary mediator");
  std::vector<Psi1Workspace> ws;
  ws.push_back(Psi1Workspace::build(q, data, cfg.a0, cfg.integration_grid_size));
  return tmle_psi1_pooled(ws, single_fold(data.n()), data.n(), cfg);
}

EstimateResult tmle_psi1_mod(const NuisanceSetDensity& q, const Dataset& data,
                             const EstimatorConfig& cfg) {
  if (data.mediator_kind != MediatorKind::Binary)
    throw Error(ErrorCode::UnsupportedKind,
                "modified targeting is defined for a binary mediator");
  std::vector<Psi1Workspace> ws;
  ws.push_back(Psi1Workspace::build(q, data, cfg.a0, cfg.integration_grid_size));
  return tmle_psi1_mod_pooled(ws, single_fold(data.n()), data.n(), cfg);
}

Eigen::VectorXd Psi2State::pi_a0() const {
  return a0 == 1 ? pi1 : (1.0 - pi1.array()).matrix();
}

Eigen::VectorXd Psi2State::xi() const {
  return mu_arm[0].cwiseProduct((1.0 - pi1.array()).matrix()) +
         mu_arm[1].cwiseProduct(pi1);
}

EifParts Psi2State::eif(double psi) const {
  EifParts parts;
  parts.phi_y = w_ratio.cwiseProduct(y_col - mu_own);
  const Eigen::VectorXd xiv = xi();
  const Eigen::VectorXd pia0 = pi_a0();
  parts.phi_m.resize(n);
  const double a0_d = static_cast<double>(a0);
  for (int i = 0; i < n; ++i)
    parts.phi_m[i] = a_col[i] == a0_d ? (xiv[i] - gamma_v[i]) / pia0[i] : 0.0;
  parts.phi_a = (kap1 - kap0).cwiseProduct(a_col - pi1);
  parts.phi_x = (gamma_v.array() - psi).matrix();
  return parts;
}

Psi2State build_psi2_state(const NuisanceSetRatio& q, const Dataset& data,
                           int a0, bool need_arm_ratios) {
  Psi2State s;
  s.a0 = a0;
  s.n = data.n();
  s.a_col = data.a;
  s.y_col = data.y;
  for (int a = 0; a < 2; ++a) {
    s.mu_arm[a].resize(s.n);
    if (need_arm_ratios) s.w_ratio_arm[a].resize(s.n);
  }
  s.mu_own.resize(s.n);
  s.pi1.resize(s.n);
  s.gamma_v.resize(s.n);
  s.kap0.resize(s.n);
  s.kap1.resize(s.n);
  s.w_ratio.resize(s.n);
  for (int i = 0; i < s.n; ++i) {
    const Eigen::RowVectorXd x = data.x.row(i);
    const Eigen::RowVectorXd m = data.m.row(i);
    for (int a = 0; a < 2; ++a) {
      s.mu_arm[a][i] = q.mu(m, a, x);
      if (need_arm_ratios) s.w_ratio_arm[a][i] = q.fratio.ratio_row(i, m, a, x);
    }
    s.mu_own[i] = data.a[i] != 0 ? s.mu_arm[1][i] : s.mu_arm[0][i];
    s.pi1[i] = q.pi1(x);
    s.gamma_v[i] = q.gamma(x);
    s.kap0[i] = q.kappa0(x);
    s.kap1[i] = q.kappa1(x);
    s.w_ratio[i] = q.fratio.ratio_row(i, m, data.a[i], x);
  }
  return s;
}

EstimateResult tmle_psi2(const NuisanceSetRatio& q, const Dataset& data,
                         const EstimatorConfig& cfg) {
  const bool binary_y = cfg.outcome_kind == OutcomeKind::Binary;
  if (binary_y && q.fratio.kind() == DensityRatioModel::Kind::Plugged)
    throw Error(ErrorCode::UnsupportedKind,
                "plugged ratios cannot be evaluated at counterfactual arms, "
                "which the binary-outcome tilt requires; use the Bayes-rule "
                "estimator");
  std::vector<Psi2State> states;
  states.push_back(build_psi2_state(q, data, cfg.a0, binary_y));

  // refit gamma on this same sample: regress updated xi on X over arm rows
  GammaRefit refit = [&data, &cfg](int, const Psi2State& s, double, double) {
    const Eigen::VectorXd xi_star = s.xi();
    const Eigen::Index n_sub = (data.a.array() == cfg.a0).count();
    if (n_sub < 2)
      throw Error(ErrorCode::InsufficientRowsInArm,
                  "gamma refit needs >= 2 rows in arm " + std::to_string(cfg.a0));
    Eigen::MatrixXd x_sub(n_sub, data.p());
    Eigen::VectorXd y_sub(n_sub);
    Eigen::Index r = 0;
    for (int i = 0; i < data.n(); ++i) {
      if (data.a[i] != cfg.a0) continue;
      x_sub.row(r) = data.x.row(i);
      y_sub[r] = xi_star[i];
      ++r;
    }
    const DesignSpec design{true,
                            cfg.learner == LearnerSpec::WithPairwiseInteractions};
    LinearFit fit = fit_linear(x_sub, y_sub, design);
    return fit.predict(data.x).eval();
  };
  return tmle_psi2_pooled(states, single_fold(data.n()), data.n(), cfg, refit);
}

// ---------------------------------------------------------------------------
// fluctuation losses (testable counterparts of the targeting score equations)

namespace fluct {

namespace {
double bernoulli_nll(double y, double p) {
  const double eps = 1e-12;
  const double pc = std::min(1.0 - eps, std::max(eps, p));
  return -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
}
}  // namespace

double loss_pi(const Psi1Workspace& w, double eps) {
  const Eigen::VectorXd h = w.eta(1) - w.eta(0);
  double total = 0.0;
  for (int i = 0; i < w.n; ++i) {
    const double p = expit(logit(w.pi1[i]) + eps * h[i]);
    total += bernoulli_nll(w.a_col[i], p);
  }
  return total / w.n;
}

double loss_fm_binary(const Psi1Workspace& w, double eps) {
  const Eigen::VectorXd d_xi = w.xi_binary(1) - w.xi_binary(0);
  const Eigen::VectorXd pia0 = w.pi_a0();
  double total = 0.0;
  for (int i = 0; i < w.n; ++i) {
    if (w.a_col[i] != static_cast<double>(w.a0)) continue;
    const double h = d_xi[i] / pia0[i];
    const double p = expit(logit(w.f1[w.a0][i]) + eps * h);
    total += bernoulli_nll(w.m_col[i], p);
  }
  return total / w.n;
}

double loss_fm_continuous(const Psi1Workspace& w, double eps) {
  const Eigen::VectorXd theta_v = w.theta();
  const Eigen::VectorXd h = (w.xi_obs() - theta_v).cwiseQuotient(w.pi_a0());
  double total = 0.0;
  for (int i = 0; i < w.n; ++i) {
    if (w.a_col[i] != static_cast<double>(w.a0)) continue;
    const double f = w.f_obs_a0[i] * (1.0 + eps * h[i]);
    if (f <= 1e-300) return kInf;
    total -= std::log(f);
  }
  return total / w.n;
}

// Quadratic losses carry 1/2 so d/d(eps) at 0 equals minus the matching
// score component exactly, not twice it.
double loss_mu_quadratic(const Psi1Workspace& w, double eps) {
  const Eigen::VectorXd ratio = w.density_ratio();
  double total = 0.0;
  for (int i = 0; i < w.n; ++i) {
    const double resid = w.y_col[i] - (w.mu_own[i] + eps);
    total += 0.5 * ratio[i] * resid * resid;
  }
  return total / w.n;
}

double loss_mu_logistic(const Psi1Workspace& w, double eps) {
  const Eigen::VectorXd ratio = w.density_ratio();
  double total = 0.0;
  for (int i = 0; i < w.n; ++i) {
    const double p = expit(logit(w.mu_own[i]) + eps * ratio[i]);
    total += bernoulli_nll(w.y_col[i], p);
  }
  return total / w.n;
}

double loss_mu2_quadratic(const Psi2State& s, double eps) {
  double total = 0.0;
  for (int i = 0; i < s.n; ++i) {
    const double resid = s.y_col[i] - (s.mu_own[i] + eps);
    total += 0.5 * s.w_ratio[i] * resid * resid;
  }
  return total / s.n;
}

double loss_mu2_logistic(const Psi2State& s, double eps) {
  double total = 0.0;
  for (int i = 0; i < s.n; ++i) {
    const double p = expit(logit(s.mu_own[i]) + eps * s.w_ratio[i]);
    total += bernoulli_nll(s.y_col[i], p);
  }
  return total / s.n;
}

double loss_pi2(const Psi2State& s, double eps) {
  const Eigen::VectorXd h = s.kap1 - s.kap0;
  double total = 0.0;
  for (int i = 0; i < s.n; ++i) {
    const double p = expit(logit(s.pi1[i]) + eps * h[i]);
    total += bernoulli_nll(s.a_col[i], p);
  }
  return total / s.n;
}

double loss_gamma2(const Psi2State& s, double eps) {
  const Eigen::VectorXd xiv = s.xi();
  const Eigen::VectorXd pia0 = s.pi_a0();
  double total = 0.0;
  for (int i = 0; i < s.n; ++i) {
    if (s.a_col[i] != static_cast<double>(s.a0)) continue;
    const double resid = xiv[i] - (s.gamma_v[i] + eps);
    total += 0.5 * resid * resid / pia0[i];
  }
  return total / s.n;
}

}  // namespace fluct

// ---------------------------------------------------------------------------

EstimateResult estimate(const Dataset& data, const EstimatorConfig& cfg,
                        const std::optional<DensityRatioModel>& plugged) {
  if (cfg.a0 != 0 && cfg.a0 != 1)
    throw Error(ErrorCode::BadArgument, "a0 must be 0 or 1");
  if (cfg.crossfit_folds < 1)
    throw Error(ErrorCode::BadArgument, "crossfit_folds must be >= 1");
  if (cfg.integration_grid_size < 2)
    throw Error(ErrorCode::BadArgument, "integration grid needs >= 2 nodes");
  if (cfg.max_tmle_iter < 1)
    throw Error(ErrorCode::BadArgument, "max_tmle_iter must be >= 1");
  if (!(cfg.prob_clip > 0 && cfg.prob_clip < 0.5))
    throw Error(ErrorCode::BadArgument, "prob_clip must lie in (0, 0.5)");
  if (plugged && cfg.estimator != EstimatorKind::Plugin2 &&
      cfg.estimator != EstimatorKind::OneStep2a &&
      cfg.estimator != EstimatorKind::Tmle2a)
    throw Error(ErrorCode::BadArgument,
                "external ratios only apply to the plug-in and -2a estimators");
  if (plugged && plugged->kind() == DensityRatioModel::Kind::Plugged &&
      plugged->per_row().size() != data.n())
    throw Error(ErrorCode::RowMismatch,
                "plugged ratio rows do not match the dataset");

  if (cfg.crossfit_folds >= 2) return crossfit_estimate(data, cfg, plugged);

  switch (cfg.estimator) {
    case EstimatorKind::Plugin1:
      return plugin_estimate_psi1(fit_density_set(data, cfg), data, cfg);
    case EstimatorKind::OneStep1:
      return onestep_psi1(fit_density_set(data, cfg), data, cfg);
    case EstimatorKind::Tmle1:
      return tmle_psi1(fit_density_set(data, cfg), data, cfg);
    case EstimatorKind::Tmle1Mod:
      return tmle_psi1_mod(fit_density_set(data, cfg), data, cfg);
    case EstimatorKind::Plugin2:
      return plugin_estimate_psi2(fit_ratio_set(data, cfg, plugged), data, cfg);
    case EstimatorKind::OneStep2a:
    case EstimatorKind::OneStep2b:
      return onestep_psi2(fit_ratio_set(data, cfg, plugged), data, cfg);
    case EstimatorKind::Tmle2a:
    case EstimatorKind::Tmle2b:
      return tmle_psi2(fit_ratio_set(data, cfg, plugged), data, cfg);
  }
  throw Error(ErrorCode::UnknownName, "unhandled estimator kind");
}

}  // namespace fd
