#include "fd/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <mutex>
#include <tuple>
#include <utility>

#include "fd/eif.hpp"
#include "fd/errors.hpp"
#include "fd/estimators.hpp"
#include "fd/glm.hpp"
#include "fd/parallel.hpp"
#include "fd/rng.hpp"

namespace fd::sim {
namespace {

// Stream ids: variable tag << 8 | mediator/covariate dimension.
constexpr std::uint32_t kStreamX = 1u << 8;
constexpr std::uint32_t kStreamA = 2u << 8;
constexpr std::uint32_t kStreamU = 3u << 8;
constexpr std::uint32_t kStreamM = 4u << 8;
constexpr std::uint32_t kStreamY = 5u << 8;
constexpr std::uint32_t kStreamTruthX = 6u << 8;

// Generating-law families: 1 = linear conditionals, 3 = interaction
// conditionals, 4 = ten-covariate polynomial conditionals.
struct Shape {
  int family = 1;
  MediatorKind kind = MediatorKind::Binary;
  int mdim = 1;
  int xdim = 1;
  bool weak = false;
};

Shape shape_of(DgpName name) {
  switch (name) {
    case DgpName::UnivBinary:
      return {1, MediatorKind::Binary, 1, 1, false};
    case DgpName::UnivContinuous:
      return {1, MediatorKind::Continuous, 1, 1, false};
    case DgpName::Bivariate:
      return {1, MediatorKind::Multivariate, 2, 1, false};
    case DgpName::Quadrivariate:
      return {1, MediatorKind::Multivariate, 4, 1, false};
    case DgpName::WeakOverlapBinary:
      return {1, MediatorKind::Binary, 1, 1, true};
    case DgpName::WeakOverlapContinuous:
      return {1, MediatorKind::Continuous, 1, 1, true};
    case DgpName::WeakOverlapBivariate:
      return {1, MediatorKind::Multivariate, 2, 1, true};
    case DgpName::MisspecBinary:
      return {3, MediatorKind::Binary, 1, 1, false};
    case DgpName::MisspecContinuous:
      return {3, MediatorKind::Continuous, 1, 1, false};
    case DgpName::CrossfitBinary:
      return {4, MediatorKind::Binary, 1, 10, false};
    case DgpName::CrossfitContinuous:
      return {4, MediatorKind::Continuous, 1, 10, false};
  }
  throw Error(ErrorCode::UnknownName, "unknown DGP enum value");
}

const char* kDgpNames[] = {
    "univ-binary",           "univ-continuous",  "bivariate",
    "quadrivariate",         "weak-overlap-binary",
    "weak-overlap-continuous", "weak-overlap-bivariate",
    "misspec-binary",        "misspec-continuous",
    "crossfit-binary",       "crossfit-continuous",
};

// Polynomial-design coefficient blocks. Treatment: [1, X, X^2] (21 terms).
// Latent/mediator/outcome blocks are listed with their layouts below.
const Eigen::VectorXd& coef_a4() {
  static const Eigen::VectorXd v = [] {
    Eigen::VectorXd c(21);
    c << 0.48, 0.07, 1, -1, -0.34, -0.12, 0.3, -0.35, 1, -0.1, 0.46, 0.33, 0,
        0.45, 0.1, -0.32, -0.08, -0.2, 0.5, 0.5, -0.03;
    return Eigen::VectorXd(0.1 * c);
  }();
  return v;
}

// Latent mean: [1, A, X, A*X(1..5)] (17 terms).
const Eigen::VectorXd& coef_u4() {
  static const Eigen::VectorXd v = [] {
    Eigen::VectorXd c(17);
    c << -2, -1, -1, 2, 3, 0.5, 3, 2, -1, 1, -3, 1.5, -3, -2, 1, 3, 1.5;
    return c;
  }();
  return v;
}

// Mediator: [1, A, X, A*X(1..5), X(6..10)^2] (22 terms).
const Eigen::VectorXd& coef_m4() {
  static const Eigen::VectorXd v = [] {
    Eigen::VectorXd c(22);
    c << 3, 1.5, -1.5, -1.5, -1, -2, -3, -3, -1.5, 2, 1.5, 3, 1.5, 2, 0.5, 0.5,
        3, -0.2, -0.33, 0.5, 0.3, -0.5;
    return Eigen::VectorXd(0.025 * c);
  }();
  return v;
}

// Outcome mean: [U, M, X, M*X(1..5), M^2, X(6..10)^2] (23 terms).
const Eigen::VectorXd& coef_y4() {
  static const Eigen::VectorXd v = [] {
    Eigen::VectorXd c(23);
    c << 1, -2, -3, -1.5, 1, 0.5, -2, 1.5, -2, -3, -3, -1.5, -1, 0.5, 3, 1.5,
        0.5, 3, 1, 1.5, -2, 3, -1;
    return c;
  }();
  return v;
}

double lin_a4(const Eigen::RowVectorXd& x) {
  const Eigen::VectorXd& c = coef_a4();
  double s = c[0];
  for (int j = 0; j < 10; ++j) s += c[1 + j] * x[j] + c[11 + j] * x[j] * x[j];
  return s;
}

double umean4(double a, const Eigen::RowVectorXd& x) {
  const Eigen::VectorXd& c = coef_u4();
  double s = c[0] + c[1] * a;
  for (int j = 0; j < 10; ++j) s += c[2 + j] * x[j];
  for (int j = 0; j < 5; ++j) s += c[12 + j] * a * x[j];
  return s;
}

double lin_m4(double a, const Eigen::RowVectorXd& x) {
  const Eigen::VectorXd& c = coef_m4();
  double s = c[0] + c[1] * a;
  for (int j = 0; j < 10; ++j) s += c[2 + j] * x[j];
  for (int j = 0; j < 5; ++j) s += c[12 + j] * a * x[j];
  for (int j = 0; j < 5; ++j) s += c[17 + j] * x[5 + j] * x[5 + j];
  return s;
}

double ymean4(double u, double m, const Eigen::RowVectorXd& x) {
  const Eigen::VectorXd& c = coef_y4();
  double s = c[0] * u + c[1] * m + c[17] * m * m;
  for (int j = 0; j < 10; ++j) s += c[2 + j] * x[j];
  for (int j = 0; j < 5; ++j) s += c[12 + j] * m * x[j];
  for (int j = 0; j < 5; ++j) s += c[18 + j] * x[5 + j] * x[5 + j];
  return s;
}

double propensity1(const Shape& s, const Eigen::RowVectorXd& x) {
  switch (s.family) {
    case 1:
      return s.weak ? 0.001 + 0.998 * x[0] : 0.3 + 0.2 * x[0];
    case 3:
      return expit(-1.0 + x[0]);
    default:
      return expit(lin_a4(x));
  }
}

double umean(const Shape& s, double a, const Eigen::RowVectorXd& x) {
  switch (s.family) {
    case 1:
      return 1.0 + a + x[0];
    case 3:
      return 1.0 + a + x[0] - a * x[0];
    default:
      return umean4(a, x);
  }
}

// Noise scales. Family 3 and the binary polynomial design state variance 2;
// the continuous polynomial design states variance 1.
double noise_sd(const Shape& s) {
  if (s.family == 1) return 1.0;
  if (s.family == 3) return std::sqrt(2.0);
  return s.kind == MediatorKind::Binary ? std::sqrt(2.0) : 1.0;
}

// Univariate mediator conditionals: Bernoulli logit or normal mean.
double mediator_lin(const Shape& s, double a, const Eigen::RowVectorXd& x) {
  switch (s.family) {
    case 1:
      return s.kind == MediatorKind::Binary ? -1.0 + a + x[0] : 1.0 + a + x[0];
    case 3:
      return s.kind == MediatorKind::Binary ? -1.0 + a + x[0] - a * x[0]
                                            : 1.0 + a + x[0] - a * x[0];
    default:
      return lin_m4(a, x);
  }
}

Eigen::VectorXd m_mean_multi(int mdim, double a, double x) {
  Eigen::VectorXd mu(mdim);
  mu[0] = 1.0 + a + x;
  mu[1] = -1.0 - 0.5 * a + 2.0 * x;
  if (mdim == 4) {
    mu[2] = -1.0 + 2.0 * a + x;
    mu[3] = 1.0 + 0.5 * a - x;
  }
  return mu;
}

const Eigen::MatrixXd& sigma_multi(int mdim) {
  static const Eigen::MatrixXd biv = [] {
    Eigen::MatrixXd s(2, 2);
    s << 2, 1, 1, 3;
    return s;
  }();
  static const Eigen::MatrixXd quad = [] {
    Eigen::MatrixXd s(4, 4);
    s << 5, -1, 0, 2, -1, 6, 1, 0, 0, 1, 4, 3, 2, 0, 3, 7;
    return s;
  }();
  return mdim == 2 ? biv : quad;
}

const Eigen::MatrixXd& chol_multi(int mdim) {
  static const Eigen::MatrixXd biv =
      Eigen::MatrixXd(sigma_multi(2).llt().matrixL());
  static const Eigen::MatrixXd quad =
      Eigen::MatrixXd(sigma_multi(4).llt().matrixL());
  return mdim == 2 ? biv : quad;
}

const Eigen::MatrixXd& sigma_inv_multi(int mdim) {
  static const Eigen::MatrixXd biv = sigma_multi(2).inverse();
  static const Eigen::MatrixXd quad = sigma_multi(4).inverse();
  return mdim == 2 ? biv : quad;
}

double ymean(const Shape& s, double u, const Eigen::RowVectorXd& m,
             const Eigen::RowVectorXd& x) {
  switch (s.family) {
    case 1:
      return u + m.sum() + x[0];
    case 3:
      return u + m[0] + x[0] - m[0] * x[0];
    default:
      return ymean4(u, m[0], x);
  }
}

// E[ mu(M, a, X) ] with M ~ f(. | a0, x): closed form for every design, since
// the outcome means are linear in M apart from one squared term with known
// residual variance.
double mu_integrated(const Shape& s, int a0, double a,
                     const Eigen::RowVectorXd& x) {
  switch (s.family) {
    case 1: {
      double mbar;
      if (s.kind == MediatorKind::Binary)
        mbar = expit(-1.0 + a0 + x[0]);
      else if (s.kind == MediatorKind::Continuous)
        mbar = 1.0 + a0 + x[0];
      else
        mbar = m_mean_multi(s.mdim, a0, x[0]).sum();
      return 1.0 + a + 2.0 * x[0] + mbar;
    }
    case 3: {
      const double mbar = s.kind == MediatorKind::Binary
                              ? expit(-1.0 + a0 + x[0] - a0 * x[0])
                              : 1.0 + a0 + x[0] - a0 * x[0];
      return 1.0 + a + 2.0 * x[0] - a * x[0] + (1.0 - x[0]) * mbar;
    }
    default: {
      const double u = umean4(a, x);
      if (s.kind == MediatorKind::Binary) {
        const double p = expit(lin_m4(a0, x));
        return (1.0 - p) * ymean4(u, 0.0, x) + p * ymean4(u, 1.0, x);
      }
      const double mbar = lin_m4(a0, x);
      return ymean4(u, mbar, x) + coef_y4()[17] * 1.0;  // Var(M | a0, x) = 1
    }
  }
}

double theta_truth(const Shape& s, int a0, const Eigen::RowVectorXd& x) {
  const double p1 = propensity1(s, x);
  return (1.0 - p1) * mu_integrated(s, a0, 0.0, x) +
         p1 * mu_integrated(s, a0, 1.0, x);
}

// Covariate-only Monte Carlo; a0 = 2 requests the arm difference. Chunked so
// the reduction order (and hence the value) is identical for any thread count.
TruthValue truth_mc(DgpName name, int a0, std::int64_t draws,
                    std::uint64_t seed) {
  const Shape s = shape_of(name);
  std::vector<rng::Stream> sx(s.xdim);
  for (int j = 0; j < s.xdim; ++j)
    sx[j] = {seed, kStreamTruthX | static_cast<std::uint32_t>(j)};

  constexpr std::int64_t kChunk = 8192;
  const std::int64_t chunks = (draws + kChunk - 1) / kChunk;
  std::vector<double> sum1(chunks, 0.0), sum2(chunks, 0.0);
  par::parallel_for(chunks, [&](std::ptrdiff_t c) {
    const std::int64_t lo = c * kChunk;
    const std::int64_t hi = std::min(draws, lo + kChunk);
    Eigen::RowVectorXd x(s.xdim);
    double s1 = 0.0, s2 = 0.0;
    for (std::int64_t i = lo; i < hi; ++i) {
      for (int j = 0; j < s.xdim; ++j)
        x[j] = rng::u01(sx[j], static_cast<std::uint64_t>(i));
      const double v = a0 == 2
                           ? theta_truth(s, 1, x) - theta_truth(s, 0, x)
                           : theta_truth(s, a0, x);
      s1 += v;
      s2 += v * v;
    }
    sum1[c] = s1;
    sum2[c] = s2;
  });
  double s1 = 0.0, s2 = 0.0;
  for (std::int64_t c = 0; c < chunks; ++c) {
    s1 += sum1[c];
    s2 += sum2[c];
  }
  const double nd = static_cast<double>(draws);
  const double mean = s1 / nd;
  const double var = std::max(0.0, (s2 - nd * mean * mean) / (nd - 1.0));
  return {mean, std::sqrt(var / nd)};
}

TruthValue truth_cached(DgpName name, int a0, std::int64_t draws,
                        std::uint64_t seed) {
  if (a0 != 0 && a0 != 1 && a0 != 2)
    throw Error(ErrorCode::BadArgument, "truth arm must be 0 or 1");
  if (draws < 2) throw Error(ErrorCode::BadArgument, "truth draws must be >= 2");
  using Key = std::tuple<int, int, std::int64_t, std::uint64_t>;
  static std::map<Key, TruthValue> cache;
  static std::mutex mu;
  const Key key{static_cast<int>(name), a0, draws, seed};
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  const TruthValue v = truth_mc(name, a0, draws, seed);
  std::lock_guard<std::mutex> lock(mu);
  return cache.emplace(key, v).first->second;
}

// One replicate of the average effect for one estimator. The oracle path
// injects the known-truth nuisance sets and calls the targeting entry points
// directly; the default path runs the full fitting pipeline.
EstimateResult ace_once(const Dataset& data, DgpName name, EstimatorKind kind,
                        const StudyConfig& sc, std::uint64_t seed) {
  EstimatorConfig cfg;
  cfg.estimator = kind;
  cfg.outcome_kind = OutcomeKind::Continuous;
  cfg.learner = sc.learner;
  cfg.propensity = sc.propensity.value_or(dgp_propensity_form(name));
  cfg.density = sc.density;
  cfg.crossfit_folds = sc.crossfit_folds;
  cfg.seed = seed;
  cfg.prob_clip = sc.prob_clip;
  cfg.integration_grid_size = sc.integration_grid_size;

  if (!sc.oracle_nuisances) {
    cfg.a0 = 1;
    const EstimateResult r1 = estimate(data, cfg);
    cfg.a0 = 0;
    const EstimateResult r0 = estimate(data, cfg);
    return ace(r1, r0);
  }

  if (sc.crossfit_folds > 1)
    throw Error(ErrorCode::BadArgument,
                "oracle nuisances do not combine with cross-fitting");
  auto arm = [&](int a0) {
    cfg.a0 = a0;
    switch (kind) {
      case EstimatorKind::Plugin1:
        return plugin_estimate_psi1(oracle_density_set(name), data, cfg);
      case EstimatorKind::OneStep1:
        return onestep_psi1(oracle_density_set(name), data, cfg);
      case EstimatorKind::Tmle1:
        return tmle_psi1(oracle_density_set(name), data, cfg);
      case EstimatorKind::Tmle1Mod:
        return tmle_psi1_mod(oracle_density_set(name), data, cfg);
      case EstimatorKind::Plugin2:
        return plugin_estimate_psi2(oracle_ratio_set(name, a0, data), data, cfg);
      case EstimatorKind::OneStep2a:
      case EstimatorKind::OneStep2b:
        return onestep_psi2(oracle_ratio_set(name, a0, data), data, cfg);
      case EstimatorKind::Tmle2a:
      case EstimatorKind::Tmle2b:
        return tmle_psi2(oracle_ratio_set(name, a0, data), data, cfg);
    }
    throw Error(ErrorCode::BadArgument, "unknown estimator kind");
  };
  return ace(arm(1), arm(0));
}

}  // namespace

std::string dgp_name(DgpName name) {
  return kDgpNames[static_cast<int>(name)];
}

DgpName dgp_from_name(const std::string& s) {
  constexpr int kCount = static_cast<int>(sizeof(kDgpNames) / sizeof(char*));
  for (int i = 0; i < kCount; ++i)
    if (s == kDgpNames[i]) return static_cast<DgpName>(i);
  throw Error(ErrorCode::UnknownName, "unknown DGP name: " + s);
}

const std::vector<std::string>& dgp_names() {
  static const std::vector<std::string> names(std::begin(kDgpNames),
                                              std::end(kDgpNames));
  return names;
}

MediatorKind dgp_mediator_kind(DgpName name) { return shape_of(name).kind; }
int dgp_x_dim(DgpName name) { return shape_of(name).xdim; }
int dgp_m_dim(DgpName name) { return shape_of(name).mdim; }

PropensityForm dgp_propensity_form(DgpName name) {
  return shape_of(name).weak ? PropensityForm::LinearProbability
                             : PropensityForm::Logistic;
}

Dataset generate(const DgpSpec& spec) {
  if (spec.n < 1)
    throw Error(ErrorCode::BadArgument, "sample size must be positive");
  const Shape s = shape_of(spec.name);
  const int n = spec.n;

  std::vector<rng::Stream> sx(s.xdim), sm(s.mdim);
  for (int j = 0; j < s.xdim; ++j)
    sx[j] = {spec.seed, kStreamX | static_cast<std::uint32_t>(j)};
  for (int j = 0; j < s.mdim; ++j)
    sm[j] = {spec.seed, kStreamM | static_cast<std::uint32_t>(j)};
  const rng::Stream sa{spec.seed, kStreamA};
  const rng::Stream su{spec.seed, kStreamU};
  const rng::Stream sy{spec.seed, kStreamY};

  Eigen::MatrixXd x(n, s.xdim), m(n, s.mdim);
  Eigen::VectorXd a(n), y(n);
  const double sd = noise_sd(s);

  par::parallel_for(n, [&](std::ptrdiff_t i) {
    const auto idx = static_cast<std::uint64_t>(i);
    for (int j = 0; j < s.xdim; ++j) x(i, j) = rng::u01(sx[j], idx);
    const Eigen::RowVectorXd xr = x.row(i);

    const double av = rng::u01(sa, idx) < propensity1(s, xr) ? 1.0 : 0.0;
    a[i] = av;
    const double u = umean(s, av, xr) + sd * rng::normal(su, idx);

    if (s.kind == MediatorKind::Binary) {
      m(i, 0) = rng::u01(sm[0], idx) < expit(mediator_lin(s, av, xr)) ? 1.0 : 0.0;
    } else if (s.kind == MediatorKind::Continuous) {
      const double msd = s.family == 3 ? std::sqrt(2.0) : 1.0;
      m(i, 0) = mediator_lin(s, av, xr) + msd * rng::normal(sm[0], idx);
    } else {
      Eigen::VectorXd z(s.mdim);
      for (int j = 0; j < s.mdim; ++j) z[j] = rng::normal(sm[j], idx);
      m.row(i) =
          (m_mean_multi(s.mdim, av, x(i, 0)) + chol_multi(s.mdim) * z)
              .transpose();
    }
    y[i] = ymean(s, u, m.row(i), xr) + sd * rng::normal(sy, idx);
  });

  return Dataset::make(std::move(x), std::move(a), std::move(m), std::move(y),
                       s.kind);
}

TruthValue truth_detail(DgpName name, int a0, std::int64_t draws,
                        std::uint64_t seed) {
  if (a0 != 0 && a0 != 1)
    throw Error(ErrorCode::BadArgument, "truth arm must be 0 or 1");
  return truth_cached(name, a0, draws, seed);
}

double truth_psi(DgpName name, int a0, std::int64_t draws, std::uint64_t seed) {
  return truth_detail(name, a0, draws, seed).psi;
}

double truth_ace(DgpName name, std::int64_t draws, std::uint64_t seed) {
  return truth_cached(name, 2, draws, seed).psi;
}

NuisanceSetDensity oracle_density_set(DgpName name) {
  const Shape s = shape_of(name);
  if (s.family == 4)
    throw Error(ErrorCode::UnsupportedKind,
                "no closed-form nuisance set for the crossfit designs");
  if (s.kind == MediatorKind::Multivariate)
    throw Error(ErrorCode::UnsupportedKind,
                "multivariate mediators have no density-parameterization set");

  NuisanceSetDensity q;
  if (s.family == 1) {
    q.mu = [](const Eigen::RowVectorXd& m, double a,
              const Eigen::RowVectorXd& x) {
      return 1.0 + a + m[0] + 2.0 * x[0];
    };
    q.pi1 = s.weak ? XFn([](const Eigen::RowVectorXd& x) {
              return 0.001 + 0.998 * x[0];
            })
                   : XFn([](const Eigen::RowVectorXd& x) {
                       return 0.3 + 0.2 * x[0];
                     });
    if (s.kind == MediatorKind::Binary) {
      LogisticFit lf;
      lf.design = DesignSpec{true, false};
      lf.beta = Eigen::Vector3d(-1.0, 1.0, 1.0);
      lf.converged = true;
      q.fm = CondDensityModel::bernoulli(lf, 1e-9);
    } else {
      LinearFit mf;
      mf.design = DesignSpec{true, false};
      mf.beta = Eigen::Vector3d(1.0, 1.0, 1.0);
      q.fm = CondDensityModel::parametric_normal(mf, 1.0, -5.0, 9.0);
    }
    return q;
  }

  q.mu = [](const Eigen::RowVectorXd& m, double a, const Eigen::RowVectorXd& x) {
    return 1.0 + a + m[0] + 2.0 * x[0] - a * x[0] - m[0] * x[0];
  };
  q.pi1 = [](const Eigen::RowVectorXd& x) { return expit(-1.0 + x[0]); };
  if (s.kind == MediatorKind::Binary) {
    LogisticFit lf;
    lf.design = DesignSpec{true, true};
    lf.beta = Eigen::Vector4d(-1.0, 1.0, 1.0, -1.0);
    lf.converged = true;
    q.fm = CondDensityModel::bernoulli(lf, 1e-9);
  } else {
    LinearFit mf;
    mf.design = DesignSpec{true, true};
    mf.beta = Eigen::Vector4d(1.0, 1.0, 1.0, -1.0);
    q.fm = CondDensityModel::parametric_normal(mf, std::sqrt(2.0), -7.5, 10.5);
  }
  return q;
}

NuisanceSetRatio oracle_ratio_set(DgpName name, int a0, const Dataset& data) {
  if (a0 != 0 && a0 != 1)
    throw Error(ErrorCode::BadArgument, "a0 must be 0 or 1");
  const Shape s = shape_of(name);
  if (s.family == 4)
    throw Error(ErrorCode::UnsupportedKind,
                "no closed-form nuisance set for the crossfit designs");

  NuisanceSetRatio q;
  if (s.kind != MediatorKind::Multivariate) {
    const NuisanceSetDensity d = oracle_density_set(name);
    q.mu = d.mu;
    q.pi1 = d.pi1;
    const bool binary = s.kind == MediatorKind::Binary;
    auto kappa = [s, binary, a0](double a, double x) {
      if (s.family == 1) {
        const double mbar = binary ? expit(-1.0 + a0 + x) : 1.0 + a0 + x;
        return 1.0 + a + 2.0 * x + mbar;
      }
      const double mbar = binary ? expit(-1.0 + a0 + x - a0 * x)
                                 : 1.0 + a0 + x - a0 * x;
      return 1.0 + a + 2.0 * x - a * x + (1.0 - x) * mbar;
    };
    q.kappa0 = [kappa](const Eigen::RowVectorXd& x) { return kappa(0.0, x[0]); };
    q.kappa1 = [kappa](const Eigen::RowVectorXd& x) { return kappa(1.0, x[0]); };
    XFn pi1 = q.pi1;
    XFn k0 = q.kappa0, k1 = q.kappa1;
    q.gamma = [pi1, k0, k1](const Eigen::RowVectorXd& x) {
      const double p = pi1(x);
      return (1.0 - p) * k0(x) + p * k1(x);
    };
    q.fratio = DensityRatioModel::from_density(d.fm, a0);
    return q;
  }

  if (data.d() != s.mdim)
    throw Error(ErrorCode::DimensionMismatch,
                "dataset mediator width does not match the design");
  q.mu = [](const Eigen::RowVectorXd& m, double a, const Eigen::RowVectorXd& x) {
    return 1.0 + a + m.sum() + 2.0 * x[0];
  };
  q.pi1 = s.weak ? XFn([](const Eigen::RowVectorXd& x) {
            return 0.001 + 0.998 * x[0];
          })
                 : XFn([](const Eigen::RowVectorXd& x) {
                     return 0.3 + 0.2 * x[0];
                   });
  const int mdim = s.mdim;
  auto kappa = [mdim, a0](double a, double x) {
    return 1.0 + a + 2.0 * x + m_mean_multi(mdim, a0, x).sum();
  };
  q.kappa0 = [kappa](const Eigen::RowVectorXd& x) { return kappa(0.0, x[0]); };
  q.kappa1 = [kappa](const Eigen::RowVectorXd& x) { return kappa(1.0, x[0]); };
  XFn pi1 = q.pi1;
  XFn k0 = q.kappa0, k1 = q.kappa1;
  q.gamma = [pi1, k0, k1](const Eigen::RowVectorXd& x) {
    const double p = pi1(x);
    return (1.0 - p) * k0(x) + p * k1(x);
  };

  // Same covariance in both arms, so the ratio is a quadratic-form contrast.
  const Eigen::MatrixXd& prec = sigma_inv_multi(mdim);
  Eigen::VectorXd r(data.n());
  for (int i = 0; i < data.n(); ++i) {
    const Eigen::VectorXd m = data.m.row(i).transpose();
    const Eigen::VectorXd d0 = m - m_mean_multi(mdim, a0, data.x(i, 0));
    const Eigen::VectorXd da = m - m_mean_multi(mdim, data.a[i], data.x(i, 0));
    r[i] = std::exp(-0.5 * (d0.dot(prec * d0) - da.dot(prec * da)));
  }
  q.fratio = DensityRatioModel::plugged(std::move(r), a0);
  return q;
}

std::string SimReport::to_csv() const {
  std::string out = "estimator,n,bias,sd,mse,coverage,width,failed\n";
  char buf[256];
  for (const SimRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%d\n",
                  r.estimator.c_str(), r.n, r.bias, r.sd, r.mse, r.coverage,
                  r.width, r.failed);
    out += buf;
  }
  return out;
}

SimReport run_study(const DgpSpec& base,
                    const std::vector<EstimatorKind>& estimators,
                    const StudyConfig& sc) {
  if (estimators.empty())
    throw Error(ErrorCode::BadArgument, "no estimators requested");
  if (sc.replicates < 1)
    throw Error(ErrorCode::BadArgument, "replicates must be >= 1");

  const double truth = truth_ace(base.name, sc.truth_draws, sc.truth_seed);
  const int R = sc.replicates;
  const int E = static_cast<int>(estimators.size());

  Eigen::MatrixXd est(R, E), lo(R, E), hi(R, E);
  std::vector<unsigned char> ok(static_cast<std::size_t>(R) * E, 0);

  par::parallel_for(R, [&](std::ptrdiff_t rep) {
    DgpSpec ds = base;
    ds.seed = base.seed + static_cast<std::uint64_t>(rep);
    Dataset data;
    try {
      data = generate(ds);
    } catch (const std::exception&) {
      return;  // every estimator fails for this replicate
    }
    for (int e = 0; e < E; ++e) {
      try {
        const EstimateResult r =
            ace_once(data, base.name, estimators[e], sc, ds.seed);
        if (!std::isfinite(r.psi) || !std::isfinite(r.se)) continue;
        est(rep, e) = r.psi;
        lo(rep, e) = r.ci_lo;
        hi(rep, e) = r.ci_hi;
        ok[static_cast<std::size_t>(rep) * E + e] = 1;
      } catch (const std::exception&) {
        // counted as failed below
      }
    }
  });

  SimReport report;
  report.dgp = dgp_name(base.name);
  report.truth = truth;
  report.replicates = R;
  for (int e = 0; e < E; ++e) {
    SimRow row;
    row.estimator = estimator_name(estimators[e]);
    row.n = base.n;
    int k = 0;
    double sum = 0.0, sumsq_err = 0.0, sum_width = 0.0;
    int covered = 0;
    for (int rep = 0; rep < R; ++rep) {
      if (!ok[static_cast<std::size_t>(rep) * E + e]) continue;
      ++k;
      sum += est(rep, e);
      const double err = est(rep, e) - truth;
      sumsq_err += err * err;
      sum_width += hi(rep, e) - lo(rep, e);
      if (lo(rep, e) <= truth && truth <= hi(rep, e)) ++covered;
    }
    row.failed = R - k;
    if (k == 0) {
      row.bias = row.sd = row.mse = row.coverage = row.width =
          std::numeric_limits<double>::quiet_NaN();
    } else {
      const double mean = sum / k;
      row.bias = mean - truth;
      row.mse = sumsq_err / k;
      row.coverage = static_cast<double>(covered) / k;
      row.width = sum_width / k;
      double ss = 0.0;
      for (int rep = 0; rep < R; ++rep) {
        if (!ok[static_cast<std::size_t>(rep) * E + e]) continue;
        const double dev = est(rep, e) - mean;
        ss += dev * dev;
      }
      row.sd = k >= 2 ? std::sqrt(ss / (k - 1)) : 0.0;
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace fd::sim
