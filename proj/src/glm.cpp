#include "fd/glm.hpp"

#include <cmath>

#include "fd/errors.hpp"

namespace fd {

namespace {

constexpr double kCoefTol = 1e-10;
constexpr double kRidge = 1e-8;
constexpr double kSeparationBound = 30.0;
constexpr int kMaxHalvings = 10;

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& design, bool intercept) {
  if (!intercept) return design;
  Eigen::MatrixXd out(design.rows(), design.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(design.cols()) = design;
  return out;
}

void check_weights(const Eigen::VectorXd& w) {
  if ((w.array() < 0).any())
    throw Error(ErrorCode::BadArgument, "negative regression weight");
  if (!(w.array() > 0).any())
    throw Error(ErrorCode::AllZeroWeights, "no positive regression weights");
}

// log(expit(eta)), stable in both tails
double log_expit(double eta) {
  return eta >= 0 ? -std::log1p(std::exp(-eta)) : eta - std::log1p(std::exp(eta));
}

Eigen::VectorXd solve_normal_equations(const Eigen::MatrixXd& xtwx,
                                       const Eigen::VectorXd& xtwz) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(xtwx);
  if (ldlt.info() == Eigen::Success) {
    Eigen::VectorXd beta = ldlt.solve(xtwz);
    const double residual = (xtwx * beta - xtwz).norm();
    if (beta.allFinite() && residual <= 1e-8 * (1.0 + xtwz.norm())) return beta;
  }
  Eigen::MatrixXd ridged = xtwx;
  ridged.diagonal().array() += kRidge;
  Eigen::VectorXd beta = Eigen::LDLT<Eigen::MatrixXd>(ridged).solve(xtwz);
  if (!beta.allFinite())
    throw Error(ErrorCode::SingularSystem, "normal equations unsolvable");
  return beta;
}

}  // namespace

Eigen::MatrixXd DesignSpec::expand(const Eigen::MatrixXd& features) const {
  if (!pairwise || features.cols() < 2) return features;
  const Eigen::Index k = features.cols();
  Eigen::MatrixXd out(features.rows(), width(static_cast<int>(k)));
  out.leftCols(k) = features;
  Eigen::Index col = k;
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = i + 1; j < k; ++j)
      out.col(col++) = features.col(i).cwiseProduct(features.col(j));
  return out;
}

int DesignSpec::width(int n_features) const {
  int w = n_features;
  if (pairwise) w += n_features * (n_features - 1) / 2;
  return w;
}

double LinearFit::predict(const Eigen::RowVectorXd& features) const {
  Eigen::MatrixXd row = design.expand(features);
  double eta = design.intercept ? beta[0] : 0.0;
  const int base = design.intercept ? 1 : 0;
  for (Eigen::Index j = 0; j < row.cols(); ++j) eta += beta[base + j] * row(0, j);
  return eta;
}

Eigen::VectorXd LinearFit::predict(const Eigen::MatrixXd& features) const {
  Eigen::MatrixXd d = with_intercept(design.expand(features), design.intercept);
  if (d.cols() != beta.size())
    throw Error(ErrorCode::DimensionMismatch, "predict width != fit width");
  return d * beta;
}

double LogisticFit::predict_logit(const Eigen::RowVectorXd& features) const {
  LinearFit lin{design, beta};
  return lin.predict(features);
}

Eigen::VectorXd LogisticFit::predict_logit(const Eigen::MatrixXd& features) const {
  LinearFit lin{design, beta};
  return lin.predict(features);
}

double LogisticFit::predict_prob(const Eigen::RowVectorXd& features,
                                 double clip) const {
  const double p = expit(predict_logit(features));
  return clip > 0 ? std::min(1.0 - clip, std::max(clip, p)) : p;
}

Eigen::VectorXd LogisticFit::predict_prob(const Eigen::MatrixXd& features,
                                          double clip) const {
  Eigen::VectorXd eta = predict_logit(features);
  Eigen::VectorXd p = eta.unaryExpr([](double e) { return expit(e); });
  if (clip > 0)
    p = p.unaryExpr([clip](double v) {
      return std::min(1.0 - clip, std::max(clip, v));
    });
  return p;
}

LinearFit fit_linear(const Eigen::MatrixXd& features, const Eigen::VectorXd& y,
                     const DesignSpec& design, const Eigen::VectorXd* weights,
                     const Eigen::VectorXd* offset) {
  const Eigen::Index n = y.size();
  if (features.rows() != n)
    throw Error(ErrorCode::RowMismatch, "feature rows != outcome rows");
  Eigen::VectorXd w = weights ? *weights : Eigen::VectorXd::Ones(n);
  if (w.size() != n) throw Error(ErrorCode::RowMismatch, "weight length");
  check_weights(w);
  Eigen::VectorXd z = offset ? (y - *offset).eval() : y;

  Eigen::MatrixXd d = with_intercept(design.expand(features), design.intercept);
  Eigen::MatrixXd xtwx = d.transpose() * w.asDiagonal() * d;
  Eigen::VectorXd xtwz = d.transpose() * w.cwiseProduct(z);
  LinearFit fit;
  fit.design = design;
  fit.beta = solve_normal_equations(xtwx, xtwz);
  return fit;
}

LogisticFit fit_logistic(const Eigen::MatrixXd& features, const Eigen::VectorXd& y,
                         const DesignSpec& design, const Eigen::VectorXd* weights,
                         const Eigen::VectorXd* offset, int max_iter) {
  const Eigen::Index n = y.size();
  if (features.rows() != n)
    throw Error(ErrorCode::RowMismatch, "feature rows != outcome rows");
  Eigen::VectorXd w = weights ? *weights : Eigen::VectorXd::Ones(n);
  if (w.size() != n) throw Error(ErrorCode::RowMismatch, "weight length");
  check_weights(w);
  Eigen::VectorXd off = offset ? *offset : Eigen::VectorXd::Zero(n);
  if (off.size() != n) throw Error(ErrorCode::RowMismatch, "offset length");

  bool seen0 = false, seen1 = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (y[i] != 0.0 && y[i] != 1.0)
      throw Error(ErrorCode::BadArgument, "logistic outcome must be 0/1");
    if (w[i] > 0) (y[i] == 0.0 ? seen0 : seen1) = true;
  }
  // Exact equality handles +-inf offsets (inf - inf is NaN, which would
  // otherwise read as nonconstant); the tolerance handles float noise.
  const bool offset_constant =
      ((off.array() == off[0]) || ((off.array() - off[0]).abs() < 1e-12)).all();
  if ((!seen0 || !seen1) && offset_constant)
    throw Error(ErrorCode::DegenerateOutcome,
                "one-class outcome with constant offset");

  Eigen::MatrixXd d = with_intercept(design.expand(features), design.intercept);
  const Eigen::Index k = d.cols();

  LogisticFit fit;
  fit.design = design;
  fit.beta = Eigen::VectorXd::Zero(k);

  auto deviance = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = d * beta + off;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (w[i] == 0) continue;
      ll += w[i] * (y[i] * log_expit(eta[i]) + (1.0 - y[i]) * log_expit(-eta[i]));
    }
    return -2.0 * ll;
  };

  double dev = deviance(fit.beta);
  fit.deviance_path.push_back(dev);

  for (int iter = 0; iter < max_iter; ++iter) {
    const Eigen::VectorXd eta = d * fit.beta + off;
    Eigen::VectorXd p = eta.unaryExpr([](double e) { return expit(e); });
    Eigen::VectorXd irls_w = w.array() * p.array() * (1.0 - p.array());
    irls_w = irls_w.cwiseMax(1e-12 * w.array().matrix());  // guards saturated rows

    Eigen::MatrixXd xtwx = d.transpose() * irls_w.asDiagonal() * d;
    Eigen::VectorXd score = d.transpose() * (w.cwiseProduct(y - p));
    Eigen::VectorXd step = solve_normal_equations(xtwx, score);

    double scale = 1.0;
    Eigen::VectorXd candidate;
    double cand_dev = dev;
    bool accepted = false;
    for (int h = 0; h <= kMaxHalvings; ++h) {
      candidate = fit.beta + scale * step;
      cand_dev = deviance(candidate);
      if (std::isfinite(cand_dev) && cand_dev <= dev + 1e-10 * (1.0 + std::abs(dev))) {
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) break;  // no descent direction left; keep current beta

    const double max_change = (scale * step).cwiseAbs().maxCoeff();
    fit.beta = candidate;
    dev = cand_dev;
    fit.deviance_path.push_back(dev);
    fit.iterations = iter + 1;
    if (fit.beta.cwiseAbs().maxCoeff() > kSeparationBound)
      throw Error(ErrorCode::SeparationDetected,
                  "logistic coefficient walked past +/-30");
    if (max_change <= kCoefTol) {
      fit.converged = true;
      break;
    }
  }
  return fit;
}

double expit(double eta) {
  if (eta >= 0) {
    const double e = std::exp(-eta);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

double logit(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw Error(ErrorCode::BadArgument, "logit needs p in (0,1)");
  return std::log(p / (1.0 - p));
}

}  // namespace fd
