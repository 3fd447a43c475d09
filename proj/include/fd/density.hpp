#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>

#include "fd/dataset.hpp"
#include "fd/glm.hpp"

namespace fd {

enum class LearnerSpec;  // fd/config.hpp

// Conditional density of a univariate mediator given (A, X). Multivariate
// mediators are never modeled directly; the ratio parameterization below
// covers them.
class CondDensityModel {
 public:
  enum class Kind { KernelGaussian, ParametricNormal, BernoulliLogistic };

  // Product-Gaussian kernel estimate with per-arm Silverman bandwidths.
  static CondDensityModel fit_kernel(const Dataset& data);
  // Homoscedastic normal around a fitted linear mean.
  static CondDensityModel fit_parametric_normal(const Dataset& data,
                                                LearnerSpec learner);
  // Bernoulli mass via logistic regression of M on (A, X).
  static CondDensityModel fit_bernoulli(const Dataset& data, LearnerSpec learner,
                                        double prob_clip);

  // Direct constructions for known-truth injections and tests.
  static CondDensityModel parametric_normal(LinearFit mean, double sd,
                                            double grid_lo, double grid_hi);
  static CondDensityModel bernoulli(LogisticFit model, double prob_clip);

  Kind kind() const { return kind_; }
  bool is_binary() const { return kind_ == Kind::BernoulliLogistic; }

  // Quadrature support for continuous kinds: [min(M) - 4h, max(M) + 4h].
  double grid_lo() const { return grid_lo_; }
  double grid_hi() const { return grid_hi_; }

  double eval(double m, double a, const Eigen::RowVectorXd& x) const;
  double prob1(double a, const Eigen::RowVectorXd& x) const;  // binary only

  // Row-wise density at (m_i | a_i, x_i); the parallel path and the serial
  // reference compute identical values.
  Eigen::VectorXd eval_batch(const Eigen::VectorXd& m, const Eigen::VectorXd& a,
                             const Eigen::MatrixXd& x, bool parallel = true) const;

  // F(i, g) = f(grid_g | a, x_i), the workhorse for per-row quadrature.
  Eigen::MatrixXd eval_grid(const Eigen::VectorXd& grid, double a,
                            const Eigen::MatrixXd& x, bool parallel = true) const;

  double bandwidth_m(int arm) const;  // kernel kind only
  double residual_sd() const { return sd_; }

 private:
  Kind kind_ = Kind::ParametricNormal;
  double grid_lo_ = 0, grid_hi_ = 0;

  // kernel state, per arm
  Eigen::VectorXd m_arm_[2];
  Eigen::MatrixXd x_arm_[2];
  double h_m_[2] = {0, 0};
  Eigen::VectorXd h_x_[2];

  // parametric state
  LinearFit mean_;
  double sd_ = 0;
  LogisticFit prob_;
  double prob_clip_ = 0;
};

// Density ratio f(m | a0, x) / f(m | a, x), the only mediator object the
// ratio-parameterization estimators need.
class DensityRatioModel {
 public:
  enum class Kind { FromDensity, BayesRule, Plugged };

  static DensityRatioModel from_density(CondDensityModel fm, int a0);
  // lambda: logistic A ~ (M, X); pi1: P(A=1 | X), already clipped. Ratio
  // assembled by Bayes rule so no density is ever estimated.
  static DensityRatioModel bayes(LogisticFit lambda,
                                 std::function<double(const Eigen::RowVectorXd&)> pi1,
                                 int a0, double prob_clip);
  // Externally supplied per-row ratios (e.g. a CSV column).
  static DensityRatioModel plugged(Eigen::VectorXd per_row, int a0);

  Kind kind() const { return kind_; }
  int a0() const { return a0_; }

  // `row` indexes the dataset for the Plugged kind and is ignored otherwise.
  double ratio_row(int row, const Eigen::RowVectorXd& m, double a,
                   const Eigen::RowVectorXd& x) const;

  const CondDensityModel& density() const;
  const Eigen::VectorXd& per_row() const { return per_row_; }  // Plugged kind

 private:
  Kind kind_ = Kind::FromDensity;
  int a0_ = 1;
  std::shared_ptr<CondDensityModel> fm_;
  LogisticFit lambda_;
  std::function<double(const Eigen::RowVectorXd&)> pi1_;
  double prob_clip_ = 0;
  Eigen::VectorXd per_row_;
};

// Trapezoid integral of g(m) f(m | a, x) dm over the model's support grid;
// binary models sum m over {0, 1} instead.
double integrate_mediator(const CondDensityModel& f, double a,
                          const Eigen::RowVectorXd& x,
                          const std::function<double(double)>& g, int grid_size);

// Evenly spaced quadrature grid with trapezoid weights.
void make_grid(double lo, double hi, int size, Eigen::VectorXd& nodes,
               Eigen::VectorXd& weights);

}  // namespace fd
