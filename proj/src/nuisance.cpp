#include "fd/nuisance.hpp"

#include <algorithm>
#include <memory>

#include "fd/errors.hpp"

namespace fd {

namespace {

Eigen::MatrixXd outcome_features(const Dataset& data) {
  Eigen::MatrixXd f(data.n(), data.d() + 1 + data.p());
  f.leftCols(data.d()) = data.m;
  f.col(data.d()) = data.a;
  f.rightCols(data.p()) = data.x;
  return f;
}

Eigen::RowVectorXd outcome_feature_row(const Eigen::RowVectorXd& m, double a,
                                       const Eigen::RowVectorXd& x) {
  Eigen::RowVectorXd f(m.size() + 1 + x.size());
  f.leftCols(m.size()) = m;
  f[m.size()] = a;
  f.rightCols(x.size()) = x;
  return f;
}

// Outcome regression for a binary Y. A constant outcome carries no
// information for a logistic fit (it would be flagged as degenerate), so in
// that case the regression collapses to the constant itself, which also makes
// every score component vanish and leaves the plug-in untouched by targeting.
MuFn fit_mu_binary(const Dataset& data, const DesignSpec& design, double clip) {
  for (int i = 0; i < data.n(); ++i)
    if (data.y[i] != 0.0 && data.y[i] != 1.0)
      throw Error(ErrorCode::UnsupportedKind,
                  "binary outcome requested but Y has values outside {0,1}");
  const double y0 = data.y[0];
  if ((data.y.array() == y0).all()) {
    return [y0](const Eigen::RowVectorXd&, double, const Eigen::RowVectorXd&) {
      return y0;
    };
  }
  auto fit = std::make_shared<LogisticFit>(
      fit_logistic(outcome_features(data), data.y, design));
  return [fit, clip](const Eigen::RowVectorXd& m, double a,
                     const Eigen::RowVectorXd& x) {
    return fit->predict_prob(outcome_feature_row(m, a, x), clip);
  };
}

// Rows of X restricted to one treatment arm along with a pseudo-outcome.
void arm_subset(const Dataset& data, int a0, const Eigen::VectorXd& pseudo,
                Eigen::MatrixXd& x_sub, Eigen::VectorXd& y_sub) {
  const Eigen::Index n_sub = (data.a.array() == a0).count();
  if (n_sub < 2)
    throw Error(ErrorCode::InsufficientRowsInArm,
                "sequential regression needs >= 2 rows in arm " +
                    std::to_string(a0));
  x_sub.resize(n_sub, data.p());
  y_sub.resize(n_sub);
  Eigen::Index r = 0;
  for (int i = 0; i < data.n(); ++i) {
    if (data.a[i] != a0) continue;
    x_sub.row(r) = data.x.row(i);
    y_sub[r] = pseudo[i];
    ++r;
  }
}

}  // namespace

XFn fit_propensity(const Dataset& data, const EstimatorConfig& cfg) {
  const DesignSpec design{true,
                          cfg.learner == LearnerSpec::WithPairwiseInteractions};
  const double clip = cfg.prob_clip;
  if (cfg.propensity == PropensityForm::LinearProbability) {
    auto fit = std::make_shared<LinearFit>(fit_linear(data.x, data.a, design));
    return [fit, clip](const Eigen::RowVectorXd& x) {
      return std::clamp(fit->predict(x), clip, 1.0 - clip);
    };
  }
  auto fit = std::make_shared<LogisticFit>(fit_logistic(data.x, data.a, design));
  return [fit, clip](const Eigen::RowVectorXd& x) {
    return fit->predict_prob(x, clip);
  };
}

NuisanceSetDensity fit_density_set(const Dataset& data,
                                   const EstimatorConfig& cfg) {
  NuisanceSetDensity q;
  const DesignSpec design{true,
                          cfg.learner == LearnerSpec::WithPairwiseInteractions};
  const double clip = cfg.prob_clip;

  if (cfg.outcome_kind == OutcomeKind::Binary) {
    q.mu = fit_mu_binary(data, design, clip);
  } else {
    auto fit = std::make_shared<LinearFit>(
        fit_linear(outcome_features(data), data.y, design));
    q.mu = [fit](const Eigen::RowVectorXd& m, double a,
                 const Eigen::RowVectorXd& x) {
      return fit->predict(outcome_feature_row(m, a, x));
    };
  }

  q.pi1 = fit_propensity(data, cfg);

  DensityKind kind = cfg.density;
  if (kind == DensityKind::Auto)
    kind = data.mediator_kind == MediatorKind::Binary
               ? DensityKind::BernoulliLogistic
               : DensityKind::KernelGaussian;
  switch (data.mediator_kind) {
    case MediatorKind::Multivariate:
      throw Error(ErrorCode::UnsupportedKind,
                  "density parameterization needs a univariate mediator; use a "
                  "ratio-parameterization estimator");
    case MediatorKind::Binary:
      if (kind != DensityKind::BernoulliLogistic)
        throw Error(ErrorCode::UnsupportedKind,
                    "binary mediator requires the bernoulli-logistic density");
      q.fm = CondDensityModel::fit_bernoulli(data, cfg.learner, clip);
      break;
    case MediatorKind::Continuous:
      if (kind == DensityKind::ParametricNormal)
        q.fm = CondDensityModel::fit_parametric_normal(data, cfg.learner);
      else if (kind == DensityKind::KernelGaussian)
        q.fm = CondDensityModel::fit_kernel(data);
      else
        throw Error(ErrorCode::UnsupportedKind,
                    "continuous mediator cannot use the bernoulli density");
      break;
  }
  return q;
}

XFn sequential_kappa(const Dataset& data, const MuFn& mu, int a0, int a,
                     LearnerSpec learner) {
  Eigen::VectorXd pseudo(data.n());
  for (int i = 0; i < data.n(); ++i)
    pseudo[i] = mu(data.m.row(i), static_cast<double>(a), data.x.row(i));
  Eigen::MatrixXd x_sub;
  Eigen::VectorXd y_sub;
  arm_subset(data, a0, pseudo, x_sub, y_sub);
  const DesignSpec design{true, learner == LearnerSpec::WithPairwiseInteractions};
  auto fit = std::make_shared<LinearFit>(fit_linear(x_sub, y_sub, design));
  return [fit](const Eigen::RowVectorXd& x) { return fit->predict(x); };
}

XFn sequential_gamma(const Dataset& data, const MuFn& mu, const XFn& pi1, int a0,
                     LearnerSpec learner) {
  Eigen::VectorXd pseudo(data.n());
  for (int i = 0; i < data.n(); ++i) {
    const double p1 = pi1(data.x.row(i));
    pseudo[i] = mu(data.m.row(i), 0.0, data.x.row(i)) * (1.0 - p1) +
                mu(data.m.row(i), 1.0, data.x.row(i)) * p1;
  }
  Eigen::MatrixXd x_sub;
  Eigen::VectorXd y_sub;
  arm_subset(data, a0, pseudo, x_sub, y_sub);
  const DesignSpec design{true, learner == LearnerSpec::WithPairwiseInteractions};
  auto fit = std::make_shared<LinearFit>(fit_linear(x_sub, y_sub, design));
  return [fit](const Eigen::RowVectorXd& x) { return fit->predict(x); };
}

NuisanceSetRatio fit_ratio_set(const Dataset& data, const EstimatorConfig& cfg,
                               const std::optional<DensityRatioModel>& plugged) {
  NuisanceSetRatio q;
  {
    const DesignSpec design{true,
                            cfg.learner == LearnerSpec::WithPairwiseInteractions};
    const double clip = cfg.prob_clip;
    if (cfg.outcome_kind == OutcomeKind::Binary) {
      q.mu = fit_mu_binary(data, design, clip);
    } else {
      auto fit = std::make_shared<LinearFit>(
          fit_linear(outcome_features(data), data.y, design));
      q.mu = [fit](const Eigen::RowVectorXd& m, double a,
                   const Eigen::RowVectorXd& x) {
        return fit->predict(outcome_feature_row(m, a, x));
      };
    }
    q.pi1 = fit_propensity(data, cfg);

    if (plugged) {
      q.fratio = *plugged;
    } else if (cfg.estimator == EstimatorKind::OneStep2b ||
               cfg.estimator == EstimatorKind::Tmle2b ||
               cfg.estimator == EstimatorKind::Plugin2) {
      Eigen::MatrixXd mx(data.n(), data.d() + data.p());
      mx.leftCols(data.d()) = data.m;
      mx.rightCols(data.p()) = data.x;
      LogisticFit lambda = fit_logistic(mx, data.a, design);
      q.fratio = DensityRatioModel::bayes(std::move(lambda), q.pi1, cfg.a0,
                                          clip);
    } else {
      if (data.mediator_kind == MediatorKind::Multivariate)
        throw Error(ErrorCode::UnsupportedKind,
                    "density-backed ratio needs a univariate mediator; supply "
                    "--ratio-file or switch to the Bayes-rule (-2b) estimator");
      CondDensityModel fm =
          data.mediator_kind == MediatorKind::Binary
              ? CondDensityModel::fit_bernoulli(data, cfg.learner, clip)
              : (cfg.density == DensityKind::ParametricNormal
                     ? CondDensityModel::fit_parametric_normal(data, cfg.learner)
                     : CondDensityModel::fit_kernel(data));
      q.fratio = DensityRatioModel::from_density(std::move(fm), cfg.a0);
    }
  }

  q.kappa0 = sequential_kappa(data, q.mu, cfg.a0, 0, cfg.learner);
  q.kappa1 = sequential_kappa(data, q.mu, cfg.a0, 1, cfg.learner);
  q.gamma = sequential_gamma(data, q.mu, q.pi1, cfg.a0, cfg.learner);
  return q;
}

double xi_fn(const NuisanceSetDensity& q, const Eigen::RowVectorXd& m,
             const Eigen::RowVectorXd& x) {
  const double p1 = q.pi1(x);
  return q.mu(m, 0.0, x) * (1.0 - p1) + q.mu(m, 1.0, x) * p1;
}

double eta_fn(const NuisanceSetDensity& q, int a0, double a,
              const Eigen::RowVectorXd& x, int grid_size) {
  Eigen::RowVectorXd m1(1);
  return integrate_mediator(
      q.fm, static_cast<double>(a0), x,
      [&](double m) {
        m1[0] = m;
        return q.mu(m1, a, x);
      },
      grid_size);
}

double theta_fn(const NuisanceSetDensity& q, int a0, const Eigen::RowVectorXd& x,
                int grid_size) {
  Eigen::RowVectorXd m1(1);
  return integrate_mediator(
      q.fm, static_cast<double>(a0), x,
      [&](double m) {
        m1[0] = m;
        return xi_fn(q, m1, x);
      },
      grid_size);
}

}  // namespace fd
