#include "fd/density.hpp"

#include <cmath>

#include "fd/config.hpp"
#include "fd/errors.hpp"
#include "fd/parallel.hpp"

namespace fd {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;
constexpr double kDensityFloor = 1e-300;

double gauss(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

double sample_sd(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  if (n < 2) return 0.0;
  const double mean = v.mean();
  return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(n - 1));
}

// Silverman's rule with a unit fallback when the arm is constant or single-row.
double silverman(double sd, Eigen::Index n_arm) {
  const double s = (std::isfinite(sd) && sd > 1e-12) ? sd : 1.0;
  return 1.06 * s * std::pow(static_cast<double>(n_arm), -0.2);
}

Eigen::MatrixXd mediator_features(const Dataset& data) {
  Eigen::MatrixXd f(data.n(), 1 + data.p());
  f.col(0) = data.a;
  f.rightCols(data.p()) = data.x;
  return f;
}

Eigen::RowVectorXd mediator_feature_row(double a, const Eigen::RowVectorXd& x) {
  Eigen::RowVectorXd f(1 + x.size());
  f[0] = a;
  f.rightCols(x.size()) = x;
  return f;
}

}  // namespace

CondDensityModel CondDensityModel::fit_kernel(const Dataset& data) {
  if (data.d() != 1)
    throw Error(ErrorCode::UnsupportedKind, "kernel density wants univariate M");
  CondDensityModel f;
  f.kind_ = Kind::KernelGaussian;
  double h_max = 0.0;
  for (int arm = 0; arm < 2; ++arm) {
    const Eigen::Index n_arm = (data.a.array() == arm).count();
    if (n_arm == 0)
      throw Error(ErrorCode::EmptyTreatmentArm,
                  "no rows with A=" + std::to_string(arm));
    f.m_arm_[arm].resize(n_arm);
    f.x_arm_[arm].resize(n_arm, data.p());
    Eigen::Index r = 0;
    for (int i = 0; i < data.n(); ++i) {
      if (data.a[i] != arm) continue;
      f.m_arm_[arm][r] = data.m(i, 0);
      f.x_arm_[arm].row(r) = data.x.row(i);
      ++r;
    }
    f.h_m_[arm] = silverman(sample_sd(f.m_arm_[arm]), n_arm);
    f.h_x_[arm].resize(data.p());
    for (int j = 0; j < data.p(); ++j)
      f.h_x_[arm][j] = silverman(sample_sd(f.x_arm_[arm].col(j)), n_arm);
    h_max = std::max(h_max, f.h_m_[arm]);
  }
  f.grid_lo_ = data.m.col(0).minCoeff() - 4.0 * h_max;
  f.grid_hi_ = data.m.col(0).maxCoeff() + 4.0 * h_max;
  return f;
}

CondDensityModel CondDensityModel::fit_parametric_normal(const Dataset& data,
                                                         LearnerSpec learner) {
  if (data.d() != 1)
    throw Error(ErrorCode::UnsupportedKind, "parametric density wants univariate M");
  DesignSpec design{true, learner == LearnerSpec::WithPairwiseInteractions};
  Eigen::MatrixXd features = mediator_features(data);
  LinearFit mean = fit_linear(features, data.m.col(0), design);
  Eigen::VectorXd fitted = mean.predict(features);
  const Eigen::VectorXd resid = data.m.col(0) - fitted;
  const int k = design.width(static_cast<int>(features.cols())) + 1;
  const int df = std::max(1, data.n() - k);
  double sd = std::sqrt(resid.squaredNorm() / static_cast<double>(df));
  if (!(sd > 1e-12)) sd = 1e-12;
  return parametric_normal(std::move(mean), sd, data.m.col(0).minCoeff() - 4.0 * sd,
                           data.m.col(0).maxCoeff() + 4.0 * sd);
}

CondDensityModel CondDensityModel::fit_bernoulli(const Dataset& data,
                                                 LearnerSpec learner,
                                                 double prob_clip) {
  if (data.d() != 1 || data.mediator_kind != MediatorKind::Binary)
    throw Error(ErrorCode::UnsupportedKind, "bernoulli density wants binary M");
  DesignSpec design{true, learner == LearnerSpec::WithPairwiseInteractions};
  LogisticFit fit = fit_logistic(mediator_features(data), data.m.col(0), design);
  return bernoulli(std::move(fit), prob_clip);
}

CondDensityModel CondDensityModel::parametric_normal(LinearFit mean, double sd,
                                                     double grid_lo,
                                                     double grid_hi) {
  CondDensityModel f;
  f.kind_ = Kind::ParametricNormal;
  f.mean_ = std::move(mean);
  f.sd_ = sd;
  f.grid_lo_ = grid_lo;
  f.grid_hi_ = grid_hi;
  return f;
}

CondDensityModel CondDensityModel::bernoulli(LogisticFit model, double prob_clip) {
  CondDensityModel f;
  f.kind_ = Kind::BernoulliLogistic;
  f.prob_ = std::move(model);
  f.prob_clip_ = prob_clip;
  f.grid_lo_ = 0;
  f.grid_hi_ = 1;
  return f;
}

double CondDensityModel::eval(double m, double a,
                              const Eigen::RowVectorXd& x) const {
  switch (kind_) {
    case Kind::KernelGaussian: {
      const int arm = a != 0.0 ? 1 : 0;
      const Eigen::VectorXd& tm = m_arm_[arm];
      const Eigen::MatrixXd& tx = x_arm_[arm];
      const double h = h_m_[arm];
      double num = 0.0, den = 0.0;
      for (Eigen::Index i = 0; i < tm.size(); ++i) {
        double wx = 1.0;
        for (Eigen::Index j = 0; j < tx.cols(); ++j) {
          const double g = h_x_[arm][j];
          wx *= gauss((x[j] - tx(i, j)) / g) / g;
        }
        den += wx;
        num += wx * gauss((m - tm[i]) / h) / h;
      }
      if (den < kDensityFloor) return kDensityFloor;
      return std::max(num / den, kDensityFloor);
    }
    case Kind::ParametricNormal: {
      const double mu = mean_.predict(mediator_feature_row(a, x));
      return std::max(gauss((m - mu) / sd_) / sd_, kDensityFloor);
    }
    case Kind::BernoulliLogistic: {
      const double p = prob1(a, x);
      return m != 0.0 ? p : 1.0 - p;
    }
  }
  return kDensityFloor;
}

double CondDensityModel::prob1(double a, const Eigen::RowVectorXd& x) const {
  if (kind_ != Kind::BernoulliLogistic)
    throw Error(ErrorCode::UnsupportedKind, "prob1 on a continuous density");
  return prob_.predict_prob(mediator_feature_row(a, x), prob_clip_);
}

Eigen::VectorXd CondDensityModel::eval_batch(const Eigen::VectorXd& m,
                                             const Eigen::VectorXd& a,
                                             const Eigen::MatrixXd& x,
                                             bool parallel) const {
  const Eigen::Index n = m.size();
  if (a.size() != n || x.rows() != n)
    throw Error(ErrorCode::RowMismatch, "eval_batch shapes disagree");
  Eigen::VectorXd out(n);
  auto body = [&](std::ptrdiff_t i) { out[i] = eval(m[i], a[i], x.row(i)); };
  if (parallel)
    par::parallel_for(n, body);
  else
    par::serial_for(n, body);
  return out;
}

Eigen::MatrixXd CondDensityModel::eval_grid(const Eigen::VectorXd& grid, double a,
                                            const Eigen::MatrixXd& x,
                                            bool parallel) const {
  const Eigen::Index n = x.rows(), g = grid.size();
  Eigen::MatrixXd out(n, g);
  auto body = [&](std::ptrdiff_t i) {
    for (Eigen::Index q = 0; q < g; ++q) out(i, q) = eval(grid[q], a, x.row(i));
  };
  if (parallel)
    par::parallel_for(n, body);
  else
    par::serial_for(n, body);
  return out;
}

double CondDensityModel::bandwidth_m(int arm) const {
  if (kind_ != Kind::KernelGaussian)
    throw Error(ErrorCode::UnsupportedKind, "bandwidth of a non-kernel density");
  return h_m_[arm];
}

DensityRatioModel DensityRatioModel::from_density(CondDensityModel fm, int a0) {
  DensityRatioModel r;
  r.kind_ = Kind::FromDensity;
  r.a0_ = a0;
  r.fm_ = std::make_shared<CondDensityModel>(std::move(fm));
  return r;
}

DensityRatioModel DensityRatioModel::bayes(
    LogisticFit lambda, std::function<double(const Eigen::RowVectorXd&)> pi1,
    int a0, double prob_clip) {
  DensityRatioModel r;
  r.kind_ = Kind::BayesRule;
  r.a0_ = a0;
  r.lambda_ = std::move(lambda);
  r.pi1_ = std::move(pi1);
  r.prob_clip_ = prob_clip;
  return r;
}

DensityRatioModel DensityRatioModel::plugged(Eigen::VectorXd per_row, int a0) {
  DensityRatioModel r;
  r.kind_ = Kind::Plugged;
  r.a0_ = a0;
  r.per_row_ = std::move(per_row);
  return r;
}

double DensityRatioModel::ratio_row(int row, const Eigen::RowVectorXd& m,
                                    double a, const Eigen::RowVectorXd& x) const {
  switch (kind_) {
    case Kind::FromDensity: {
      if (a == static_cast<double>(a0_)) return 1.0;
      const double num = fm_->eval(m[0], static_cast<double>(a0_), x);
      const double den = fm_->eval(m[0], a, x);
      return num / std::max(den, 1e-12);
    }
    case Kind::BayesRule: {
      if (a == static_cast<double>(a0_)) return 1.0;
      Eigen::RowVectorXd mx(m.size() + x.size());
      mx.leftCols(m.size()) = m;
      mx.rightCols(x.size()) = x;
      const double lam1 = lambda_.predict_prob(mx, prob_clip_);
      const double pi1 = pi1_(x);
      const double lam_a0 = a0_ == 1 ? lam1 : 1.0 - lam1;
      const double lam_a = a != 0.0 ? lam1 : 1.0 - lam1;
      const double pi_a0 = a0_ == 1 ? pi1 : 1.0 - pi1;
      const double pi_a = a != 0.0 ? pi1 : 1.0 - pi1;
      return (lam_a0 / lam_a) * (pi_a / pi_a0);
    }
    case Kind::Plugged: {
      if (row < 0 || row >= per_row_.size())
        throw Error(ErrorCode::RowMismatch, "plugged ratio row out of range");
      return per_row_[row];
    }
  }
  return 1.0;
}

const CondDensityModel& DensityRatioModel::density() const {
  if (kind_ != Kind::FromDensity || !fm_)
    throw Error(ErrorCode::UnsupportedKind, "ratio model holds no density");
  return *fm_;
}

void make_grid(double lo, double hi, int size, Eigen::VectorXd& nodes,
               Eigen::VectorXd& weights) {
  if (size < 2) throw Error(ErrorCode::BadArgument, "grid needs >= 2 nodes");
  if (!(hi > lo)) throw Error(ErrorCode::BadArgument, "empty grid range");
  nodes.resize(size);
  weights.resize(size);
  const double step = (hi - lo) / static_cast<double>(size - 1);
  for (int i = 0; i < size; ++i) {
    nodes[i] = lo + step * i;
    weights[i] = (i == 0 || i == size - 1) ? step / 2.0 : step;
  }
}

double integrate_mediator(const CondDensityModel& f, double a,
                          const Eigen::RowVectorXd& x,
                          const std::function<double(double)>& g, int grid_size) {
  if (f.is_binary()) {
    const double p = f.prob1(a, x);
    return g(0.0) * (1.0 - p) + g(1.0) * p;
  }
  Eigen::VectorXd nodes, weights;
  make_grid(f.grid_lo(), f.grid_hi(), grid_size, nodes, weights);
  double total = 0.0;
  for (int i = 0; i < grid_size; ++i)
    total += weights[i] * g(nodes[i]) * f.eval(nodes[i], a, x);
  return total;
}

}  // namespace fd
