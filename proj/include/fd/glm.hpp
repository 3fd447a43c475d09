#pragma once

#include <Eigen/Dense>
#include <vector>

namespace fd {

// Design expansion applied to a raw feature block. `pairwise` appends products
// of all distinct feature pairs; the intercept column is handled by the fits
// themselves so no-intercept fluctuation regressions stay natural.
struct DesignSpec {
  bool intercept = true;
  bool pairwise = false;

  Eigen::MatrixXd expand(const Eigen::MatrixXd& features) const;
  int width(int n_features) const;
};

struct LinearFit {
  DesignSpec design;
  Eigen::VectorXd beta;  // intercept first when design.intercept

  double predict(const Eigen::RowVectorXd& features) const;
  Eigen::VectorXd predict(const Eigen::MatrixXd& features) const;
};

struct LogisticFit {
  DesignSpec design;
  Eigen::VectorXd beta;
  bool converged = false;
  int iterations = 0;
  std::vector<double> deviance_path;  // one entry per accepted IRLS step

  double predict_logit(const Eigen::RowVectorXd& features) const;
  Eigen::VectorXd predict_logit(const Eigen::MatrixXd& features) const;
  // Probabilities clipped to [clip, 1-clip]; pass 0 for raw values.
  double predict_prob(const Eigen::RowVectorXd& features, double clip) const;
  Eigen::VectorXd predict_prob(const Eigen::MatrixXd& features, double clip) const;
};

// Weighted least squares of (y - offset) on the expanded design. Null weights
// mean all ones; null offset means zero. Singular systems fall back to a
// 1e-8 ridge.
LinearFit fit_linear(const Eigen::MatrixXd& features, const Eigen::VectorXd& y,
                     const DesignSpec& design,
                     const Eigen::VectorXd* weights = nullptr,
                     const Eigen::VectorXd* offset = nullptr);

// Bernoulli IRLS with offset and per-row weights. Starts at beta = 0,
// converges on max coefficient change <= 1e-10, halves rejected steps up to
// 10 times, and throws SeparationDetected once any |beta_j| exceeds 30.
LogisticFit fit_logistic(const Eigen::MatrixXd& features, const Eigen::VectorXd& y,
                         const DesignSpec& design,
                         const Eigen::VectorXd* weights = nullptr,
                         const Eigen::VectorXd* offset = nullptr,
                         int max_iter = 100);

double expit(double eta);
double logit(double p);

}  // namespace fd
