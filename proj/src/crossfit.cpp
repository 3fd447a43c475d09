#include "fd/crossfit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fd/errors.hpp"
#include "fd/glm.hpp"

namespace fd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::VectorXd logit_vec(const Eigen::VectorXd& p) {
  return p.unaryExpr([](double v) { return logit(v); });
}

Eigen::VectorXd expit_vec(const Eigen::VectorXd& eta) {
  return eta.unaryExpr([](double e) { return expit(e); });
}

// Assemble a pooled row vector from per-fold pieces, preserving original
// row order so pooled fits do not depend on the fold labeling.
Eigen::VectorXd gather(const std::vector<std::vector<int>>& rows, int n_total,
                       const std::vector<Eigen::VectorXd>& per_fold) {
  Eigen::VectorXd out(n_total);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (per_fold[k].size() != static_cast<Eigen::Index>(rows[k].size()))
      throw Error(ErrorCode::RowMismatch, "fold vector length mismatch");
    for (std::size_t j = 0; j < rows[k].size(); ++j)
      out[rows[k][j]] = per_fold[k][j];
  }
  return out;
}

template <class F>
Eigen::VectorXd gather_fn(const std::vector<std::vector<int>>& rows, int n_total,
                          F&& per_fold) {
  std::vector<Eigen::VectorXd> pieces(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) pieces[k] = per_fold(k);
  return gather(rows, n_total, pieces);
}

EifParts gather_parts(const std::vector<std::vector<int>>& rows, int n_total,
                      const std::vector<EifParts>& per_fold) {
  EifParts out;
  auto one = [&](Eigen::VectorXd EifParts::* field) {
    std::vector<Eigen::VectorXd> pieces(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k)
      pieces[k] = per_fold[k].*field;
    return gather(rows, n_total, pieces);
  };
  out.phi_y = one(&EifParts::phi_y);
  out.phi_m = one(&EifParts::phi_m);
  out.phi_a = one(&EifParts::phi_a);
  out.phi_x = one(&EifParts::phi_x);
  return out;
}

struct EpsFit {
  double eps = 0;
  bool fell_back = false;
  std::string note;
};

// One-dimensional no-intercept logistic fluctuation along clever covariate h.
// Separation and degenerate subsets resolve to eps = 0 so targeting survives
// near positivity violations.
EpsFit fit_eps_logistic(const Eigen::VectorXd& h, const Eigen::VectorXd& y01,
                        const Eigen::VectorXd& offset_logit,
                        const Eigen::VectorXd* weights = nullptr) {
  try {
    Eigen::MatrixXd design(h.size(), 1);
    design.col(0) = h;
    LogisticFit fit = fit_logistic(design, y01, DesignSpec{false, false}, weights,
                                   &offset_logit);
    return {fit.beta[0], false, ""};
  } catch (const Error& e) {
    switch (e.code()) {
      case ErrorCode::SeparationDetected:
      case ErrorCode::DegenerateOutcome:
      case ErrorCode::AllZeroWeights:
      case ErrorCode::SingularSystem:
        return {0.0, true, e.what()};
      default:
        throw;
    }
  }
}

// Weighted intercept-only least squares, the closed-form score solution.
double weighted_intercept(const Eigen::VectorXd& y, const Eigen::VectorXd& offset,
                          const Eigen::VectorXd& w) {
  const double total = w.sum();
  if (!(total > 0))
    throw Error(ErrorCode::AllZeroWeights, "fluctuation weights sum to zero");
  return w.cwiseProduct(y - offset).sum() / total;
}

void check_pool(const std::vector<std::size_t>& sizes,
                const std::vector<std::vector<int>>& fold_rows, int n_total) {
  if (sizes.size() != fold_rows.size() || sizes.empty())
    throw Error(ErrorCode::DimensionMismatch,
                "fold workspaces and row lists must align");
  std::size_t total = 0;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    if (sizes[k] != fold_rows[k].size())
      throw Error(ErrorCode::RowMismatch, "workspace rows mismatch fold rows");
    total += sizes[k];
  }
  if (total != static_cast<std::size_t>(n_total))
    throw Error(ErrorCode::RowMismatch, "fold rows do not cover the sample");
}

// Pooled score means of the tracked components, psi-free.
struct PooledScores {
  double s_y = 0, s_m = 0, s_a = 0;
};

PooledScores pooled_scores(const std::vector<Psi1Workspace>& ws, int n_total) {
  PooledScores s;
  double sy = 0, sm = 0, sa = 0;
  for (const auto& w : ws) {
    const EifParts parts = w.eif(0.0);
    sy += parts.phi_y.sum();
    sm += parts.phi_m.sum();
    sa += parts.phi_a.sum();
  }
  s.s_y = std::abs(sy / n_total);
  s.s_m = std::abs(sm / n_total);
  s.s_a = std::abs(sa / n_total);
  return s;
}

double fold_average(const std::vector<Eigen::VectorXd>& per_fold_values) {
  double acc = 0;
  for (const auto& v : per_fold_values) acc += v.mean();
  return acc / static_cast<double>(per_fold_values.size());
}

// ---------------------------------------------------------------------------
// shared pieces of the psi1 targeting loops

struct Psi1Pool {
  std::vector<Psi1Workspace>* ws;
  const std::vector<std::vector<int>>* rows;
  int n_total;
  int k;
  Eigen::VectorXd a_all, m_all, y_all, a0w_all;

  Psi1Pool(std::vector<Psi1Workspace>& w,
           const std::vector<std::vector<int>>& r, int n)
      : ws(&w), rows(&r), n_total(n), k(static_cast<int>(w.size())) {
    std::vector<std::size_t> sizes;
    for (const auto& wk : w) sizes.push_back(static_cast<std::size_t>(wk.n));
    check_pool(sizes, r, n);
    a_all = gather_fn(r, n, [&](int j) { return w[j].a_col; });
    m_all = gather_fn(r, n, [&](int j) { return w[j].m_col; });
    y_all = gather_fn(r, n, [&](int j) { return w[j].y_col; });
    a0w_all =
        (a_all.array() == static_cast<double>(w[0].a0)).cast<double>().matrix();
  }
};

// Propensity fluctuation along eta(1,.) - eta(0,.), one eps for all folds.
EpsFit pooled_eps_a(Psi1Pool& pool, std::vector<Eigen::VectorXd>& lp_pi) {
  auto& ws = *pool.ws;
  std::vector<Eigen::VectorXd> h(pool.k);
  for (int j = 0; j < pool.k; ++j) h[j] = ws[j].eta(1) - ws[j].eta(0);
  const Eigen::VectorXd h_all = gather(*pool.rows, pool.n_total, h);
  const Eigen::VectorXd off_all = gather(*pool.rows, pool.n_total, lp_pi);
  EpsFit fit = fit_eps_logistic(h_all, pool.a_all, off_all);
  for (int j = 0; j < pool.k; ++j) {
    lp_pi[j] += fit.eps * h[j];
    ws[j].pi1 = expit_vec(lp_pi[j]);
  }
  return fit;
}

// Binary-mediator density fluctuation: fit on the a0 arm with clever
// covariate (xi(1,.) - xi(0,.)) / pi(a0|.), updating the a0-arm density only.
// The off-arm density appears in nothing the targeting has to solve (it only
// enters the outcome-shift weight through the ratio denominator), and
// fluctuating it divides by pi(arm|.) at rows where that arm is nearly never
// observed, which degenerates the ratio under weak overlap.
EpsFit pooled_eps_m_binary(Psi1Pool& pool,
                           std::vector<std::array<Eigen::VectorXd, 2>>& lp_f) {
  auto& ws = *pool.ws;
  const int a0 = ws[0].a0;
  std::vector<Eigen::VectorXd> h_fit(pool.k), off(pool.k);
  for (int j = 0; j < pool.k; ++j) {
    h_fit[j] = (ws[j].xi_binary(1) - ws[j].xi_binary(0))
                   .cwiseQuotient(ws[j].pi_a0());
    off[j] = lp_f[j][a0];
  }
  const Eigen::VectorXd h_all = gather(*pool.rows, pool.n_total, h_fit);
  const Eigen::VectorXd off_all = gather(*pool.rows, pool.n_total, off);
  EpsFit fit = fit_eps_logistic(h_all, pool.m_all, off_all, &pool.a0w_all);
  for (int j = 0; j < pool.k; ++j) {
    lp_f[j][a0] += fit.eps * h_fit[j];
    ws[j].f1[a0] = expit_vec(lp_f[j][a0]);
  }
  return fit;
}

// Closing outcome shift for continuous Y: exact weighted-intercept solution
// of the ratio-weighted quadratic loss.
double pooled_eps_y_shift(Psi1Pool& pool) {
  auto& ws = *pool.ws;
  const Eigen::VectorXd ratio_all =
      gather_fn(*pool.rows, pool.n_total,
                [&](int j) { return ws[j].density_ratio(); });
  const Eigen::VectorXd mu_all =
      gather_fn(*pool.rows, pool.n_total, [&](int j) { return ws[j].mu_own; });
  const double ey = weighted_intercept(pool.y_all, mu_all, ratio_all);
  for (int j = 0; j < pool.k; ++j) {
    if (ws[j].binary_m) {
      for (int m = 0; m < 2; ++m)
        for (int a = 0; a < 2; ++a) ws[j].mu_ma[m][a].array() += ey;
    } else {
      for (int a = 0; a < 2; ++a) {
        ws[j].mu_grid[a].array() += ey;
        ws[j].mu_obs[a].array() += ey;
      }
    }
    ws[j].mu_own.array() += ey;
  }
  return ey;
}

// Outcome tilt for binary Y (binary mediator only): logistic submodel along
// the density ratio, applied at every (m, a) combination.
EpsFit pooled_eps_y_tilt(Psi1Pool& pool,
                         std::vector<std::array<std::array<Eigen::VectorXd, 2>, 2>>&
                             lp_mu) {
  auto& ws = *pool.ws;
  const int a0 = ws[0].a0;
  std::vector<Eigen::VectorXd> ratio(pool.k), lp_own(pool.k);
  for (int j = 0; j < pool.k; ++j) {
    ratio[j] = ws[j].density_ratio();
    lp_own[j].resize(ws[j].n);
    for (int i = 0; i < ws[j].n; ++i) {
      const int ai = ws[j].a_col[i] != 0 ? 1 : 0;
      const int mi = ws[j].m_col[i] != 0 ? 1 : 0;
      lp_own[j][i] = lp_mu[j][mi][ai][i];
    }
  }
  const Eigen::VectorXd h_all = gather(*pool.rows, pool.n_total, ratio);
  const Eigen::VectorXd off_all = gather(*pool.rows, pool.n_total, lp_own);
  EpsFit fit = fit_eps_logistic(h_all, pool.y_all, off_all);
  for (int j = 0; j < pool.k; ++j) {
    for (int m = 0; m < 2; ++m)
      for (int a = 0; a < 2; ++a) {
        Eigen::VectorXd h_ma(ws[j].n);
        for (int i = 0; i < ws[j].n; ++i) {
          if (a == a0) {
            h_ma[i] = 1.0;
          } else {
            const double num =
                m != 0 ? ws[j].f1[a0][i] : 1.0 - ws[j].f1[a0][i];
            const double den = m != 0 ? ws[j].f1[a][i] : 1.0 - ws[j].f1[a][i];
            h_ma[i] = num / std::max(den, 1e-12);
          }
        }
        lp_mu[j][m][a] += fit.eps * h_ma;
        ws[j].mu_ma[m][a] = expit_vec(lp_mu[j][m][a]);
      }
    for (int i = 0; i < ws[j].n; ++i) {
      const int ai = ws[j].a_col[i] != 0 ? 1 : 0;
      const int mi = ws[j].m_col[i] != 0 ? 1 : 0;
      ws[j].mu_own[i] = ws[j].mu_ma[mi][ai][i];
    }
  }
  return fit;
}

// Continuous-mediator density fluctuation f(1 + eps h), h = (xi - theta)/pi.
// eps minimizes the pooled log-loss over the interval keeping the updated
// density nonnegative at every observed point and grid node.

struct EpsRange {
  double lo, hi;
};

void tighten(EpsRange& r, double h) {
  if (h > 0)
    r.lo = std::max(r.lo, -1.0 / h);
  else if (h < 0)
    r.hi = std::min(r.hi, -1.0 / h);
}

double continuous_fm_risk(const Eigen::VectorXd& h_obs,
                          const Eigen::VectorXd& a0_weight, double eps) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < h_obs.size(); ++i) {
    if (a0_weight[i] == 0.0) continue;
    const double factor = 1.0 + eps * h_obs[i];
    if (factor <= 1e-12) return kInf;
    total -= std::log(factor);
  }
  return total / static_cast<double>(h_obs.size());
}

double minimize_eps_continuous(const Eigen::VectorXd& h_obs,
                               const Eigen::VectorXd& a0_weight,
                               const EpsRange& range) {
  if (!(range.hi > range.lo)) return 0.0;
  const int kGrid = 200;
  double best_eps = 0.0;
  double best_risk = continuous_fm_risk(h_obs, a0_weight, 0.0);
  const double span = range.hi - range.lo;
  for (int g = 0; g < kGrid; ++g) {
    const double eps = range.lo + span * (g + 0.5) / kGrid;
    const double risk = continuous_fm_risk(h_obs, a0_weight, eps);
    if (risk < best_risk) {
      best_risk = risk;
      best_eps = eps;
    }
  }
  double a = std::max(range.lo, best_eps - span / kGrid);
  double b = std::min(range.hi, best_eps + span / kGrid);
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = continuous_fm_risk(h_obs, a0_weight, c);
  double fd = continuous_fm_risk(h_obs, a0_weight, d);
  for (int it = 0; it < 80 && (b - a) > 1e-12; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = continuous_fm_risk(h_obs, a0_weight, c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = continuous_fm_risk(h_obs, a0_weight, d);
    }
  }
  const double refined = 0.5 * (a + b);
  if (continuous_fm_risk(h_obs, a0_weight, refined) < best_risk)
    best_eps = refined;
  return best_eps;
}

double pooled_eps_m_continuous(Psi1Pool& pool, bool& empty_range) {
  auto& ws = *pool.ws;
  constexpr double kEpsCap = 1.0;
  std::vector<Eigen::VectorXd> h_obs(pool.k);
  std::vector<Eigen::MatrixXd> h_grid(pool.k);
  EpsRange range{-kEpsCap, kEpsCap};
  for (int j = 0; j < pool.k; ++j) {
    const Eigen::VectorXd pia0 = ws[j].pi_a0();
    const Eigen::VectorXd theta_v = ws[j].theta();
    h_obs[j] = (ws[j].xi_obs() - theta_v).cwiseQuotient(pia0);
    Eigen::MatrixXd xi_grid =
        (ws[j].mu_grid[0].array().colwise() * (1.0 - ws[j].pi1.array())) +
        (ws[j].mu_grid[1].array().colwise() * ws[j].pi1.array());
    h_grid[j] = ((xi_grid.colwise() - theta_v).array().colwise() /
                 pia0.array())
                    .matrix();
    for (Eigen::Index i = 0; i < h_obs[j].size(); ++i) tighten(range, h_obs[j][i]);
    for (Eigen::Index i = 0; i < h_grid[j].rows(); ++i)
      for (Eigen::Index g = 0; g < h_grid[j].cols(); ++g)
        tighten(range, h_grid[j](i, g));
  }
  double eps = 0.0;
  empty_range = !(range.hi > range.lo);
  if (!empty_range) {
    const Eigen::VectorXd h_all = gather(*pool.rows, pool.n_total, h_obs);
    eps = minimize_eps_continuous(h_all, pool.a0w_all, range);
  }
  for (int j = 0; j < pool.k; ++j) {
    ws[j].f_grid.array() *= (1.0 + eps * h_grid[j].array());
    ws[j].f_obs_a0.array() *= (1.0 + eps * h_obs[j].array());
    for (int i = 0; i < ws[j].n; ++i)
      if (ws[j].a_col[i] == static_cast<double>(ws[j].a0))
        ws[j].f_obs_own[i] = ws[j].f_obs_a0[i];
  }
  return eps;
}

EstimateResult finalize_psi1(Psi1Pool& pool, EstimateResult&& progress,
                             bool converged) {
  auto& ws = *pool.ws;
  std::vector<Eigen::VectorXd> thetas(pool.k);
  for (int j = 0; j < pool.k; ++j) thetas[j] = ws[j].theta();
  const double psi = fold_average(thetas);
  std::vector<EifParts> parts(pool.k);
  for (int j = 0; j < pool.k; ++j) parts[j] = ws[j].eif(psi);
  EstimateResult out =
      finish_estimate(psi, gather_parts(*pool.rows, pool.n_total, parts));
  out.epsilon_history = std::move(progress.epsilon_history);
  out.iterations = progress.iterations;
  out.converged = converged;
  out.warnings = std::move(progress.warnings);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

FoldPlan FoldPlan::build(int n, int k, std::uint64_t seed) {
  FoldPlan plan;
  plan.k = k;
  plan.fold_of = split_folds(n, k, seed);
  plan.fold_rows.assign(k, {});
  for (int i = 0; i < n; ++i) plan.fold_rows[plan.fold_of[i] - 1].push_back(i);
  return plan;
}

std::vector<int> FoldPlan::complement(int fold) const {
  std::vector<int> out;
  out.reserve(fold_of.size());
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] != fold + 1) out.push_back(static_cast<int>(i));
  return out;
}

Dataset subset_rows(const Dataset& data, const std::vector<int>& rows) {
  const int m = static_cast<int>(rows.size());
  Eigen::MatrixXd x(m, data.p()), mm(m, data.d());
  Eigen::VectorXd a(m), y(m);
  for (int j = 0; j < m; ++j) {
    const int i = rows[j];
    if (i < 0 || i >= data.n())
      throw Error(ErrorCode::BadArgument, "row index out of range");
    x.row(j) = data.x.row(i);
    mm.row(j) = data.m.row(i);
    a[j] = data.a[i];
    y[j] = data.y[i];
  }
  return Dataset::make(std::move(x), std::move(a), std::move(mm), std::move(y),
                       data.mediator_kind);
}

// ---------------------------------------------------------------------------

EstimateResult tmle_psi1_pooled(std::vector<Psi1Workspace>& ws,
                                const std::vector<std::vector<int>>& fold_rows,
                                int n_total, const EstimatorConfig& cfg) {
  Psi1Pool pool(ws, fold_rows, n_total);
  const bool binary_m = ws[0].binary_m;
  const bool binary_y = cfg.outcome_kind == OutcomeKind::Binary;
  if (binary_y && !binary_m)
    throw Error(ErrorCode::UnsupportedKind,
                "binary-outcome targeting needs a binary mediator");
  const double c_n = score_tolerance(cfg, n_total);

  std::vector<Eigen::VectorXd> lp_pi(pool.k);
  std::vector<std::array<Eigen::VectorXd, 2>> lp_f(pool.k);
  std::vector<std::array<std::array<Eigen::VectorXd, 2>, 2>> lp_mu(pool.k);
  for (int j = 0; j < pool.k; ++j) {
    lp_pi[j] = logit_vec(ws[j].pi1);
    if (binary_m)
      for (int arm = 0; arm < 2; ++arm) lp_f[j][arm] = logit_vec(ws[j].f1[arm]);
    if (binary_y)
      for (int m = 0; m < 2; ++m)
        for (int a = 0; a < 2; ++a) lp_mu[j][m][a] = logit_vec(ws[j].mu_ma[m][a]);
  }

  EstimateResult progress;
  bool noted_fallback = false;
  auto note = [&](const std::string& msg) {
    if (!noted_fallback) progress.warnings.push_back(msg);
    noted_fallback = true;
  };
  // Exact zeros are no-op updates (already-solved scores, separation
  // fallbacks); the history records the fluctuations that moved something.
  auto record = [&](const char* name, double eps) {
    if (eps != 0.0) progress.epsilon_history.emplace_back(name, eps);
  };

  // Convergence is tested before each pass, so nuisances that already solve
  // the score equations exit with zero iterations and an empty history.
  bool converged = false;
  for (int iter = 0;; ++iter) {
    const PooledScores s = pooled_scores(ws, n_total);
    const double worst =
        binary_y ? std::max({s.s_a, s.s_m, s.s_y}) : std::max(s.s_a, s.s_m);
    if (worst <= c_n) {
      converged = true;
      break;
    }
    if (iter == cfg.max_tmle_iter) {
      progress.warnings.push_back("max targeting iterations reached");
      break;
    }

    const EpsFit ea = pooled_eps_a(pool, lp_pi);
    if (ea.fell_back) note("eps_A fallback: " + ea.note);
    record("A", ea.eps);

    double em = 0.0;
    if (binary_m) {
      const EpsFit fit = pooled_eps_m_binary(pool, lp_f);
      if (fit.fell_back) note("eps_M fallback: " + fit.note);
      em = fit.eps;
    } else {
      bool empty_range = false;
      em = pooled_eps_m_continuous(pool, empty_range);
      if (empty_range) note("empty eps_M range; density update skipped");
    }
    record("M", em);

    double ey = 0.0;
    if (binary_y) {
      const EpsFit fit = pooled_eps_y_tilt(pool, lp_mu);
      if (fit.fell_back) note("eps_Y fallback: " + fit.note);
      ey = fit.eps;
      record("Y", ey);
    }

    progress.iterations = iter + 1;
    if (ea.eps == 0.0 && em == 0.0 && (!binary_y || ey == 0.0)) {
      progress.warnings.push_back("targeting stalled before reaching C_n");
      break;
    }
  }

  if (!binary_y) {
    const double ey = pooled_eps_y_shift(pool);
    record("Y", ey);
  }
  return finalize_psi1(pool, std::move(progress), converged);
}

EstimateResult tmle_psi1_mod_pooled(std::vector<Psi1Workspace>& ws,
                                    const std::vector<std::vector<int>>& fold_rows,
                                    int n_total, const EstimatorConfig& cfg) {
  Psi1Pool pool(ws, fold_rows, n_total);
  if (!ws[0].binary_m)
    throw Error(ErrorCode::UnsupportedKind,
                "modified targeting is defined for a binary mediator");
  if (cfg.outcome_kind == OutcomeKind::Binary)
    throw Error(ErrorCode::UnsupportedKind,
                "modified targeting supports continuous outcomes only");

  EstimateResult progress;
  std::vector<std::array<Eigen::VectorXd, 2>> lp_f(pool.k);
  for (int j = 0; j < pool.k; ++j)
    for (int arm = 0; arm < 2; ++arm) lp_f[j][arm] = logit_vec(ws[j].f1[arm]);

  // one mediator-density update at the initial propensity, one outcome shift
  const EpsFit em = pooled_eps_m_binary(pool, lp_f);
  if (em.fell_back) progress.warnings.push_back("eps_M fallback: " + em.note);
  if (em.eps != 0.0) progress.epsilon_history.emplace_back("M", em.eps);
  const double ey = pooled_eps_y_shift(pool);
  if (ey != 0.0) progress.epsilon_history.emplace_back("Y", ey);

  // plug-in under the empirical joint of (A, X): eta at the observed arm
  std::vector<Eigen::VectorXd> eta_own(pool.k);
  for (int j = 0; j < pool.k; ++j) {
    const Eigen::VectorXd eta0 = ws[j].eta(0), eta1 = ws[j].eta(1);
    eta_own[j].resize(ws[j].n);
    for (int i = 0; i < ws[j].n; ++i)
      eta_own[j][i] = ws[j].a_col[i] != 0 ? eta1[i] : eta0[i];
  }
  const double psi = fold_average(eta_own);
  std::vector<EifParts> parts(pool.k);
  for (int j = 0; j < pool.k; ++j) parts[j] = ws[j].eif(psi);
  EstimateResult out =
      finish_estimate(psi, gather_parts(fold_rows, n_total, parts));
  out.epsilon_history = std::move(progress.epsilon_history);
  out.iterations = 1;
  out.warnings = std::move(progress.warnings);
  return out;
}

EstimateResult tmle_psi2_pooled(std::vector<Psi2State>& states,
                                const std::vector<std::vector<int>>& fold_rows,
                                int n_total, const EstimatorConfig& cfg,
                                const GammaRefit& refit_gamma) {
  const int k = static_cast<int>(states.size());
  {
    std::vector<std::size_t> sizes;
    for (const auto& s : states) sizes.push_back(static_cast<std::size_t>(s.n));
    check_pool(sizes, fold_rows, n_total);
  }
  const bool binary_y = cfg.outcome_kind == OutcomeKind::Binary;
  EstimateResult progress;

  const Eigen::VectorXd y_all =
      gather_fn(fold_rows, n_total, [&](int j) { return states[j].y_col; });
  const Eigen::VectorXd a_all =
      gather_fn(fold_rows, n_total, [&](int j) { return states[j].a_col; });
  const Eigen::VectorXd ratio_all =
      gather_fn(fold_rows, n_total, [&](int j) { return states[j].w_ratio; });

  // outcome update
  double ey = 0.0;
  if (binary_y) {
    const Eigen::VectorXd off_all = gather_fn(
        fold_rows, n_total, [&](int j) { return logit_vec(states[j].mu_own); });
    const EpsFit fit = fit_eps_logistic(ratio_all, y_all, off_all);
    if (fit.fell_back) progress.warnings.push_back("eps_Y fallback: " + fit.note);
    ey = fit.eps;
    for (int j = 0; j < k; ++j) {
      for (int a = 0; a < 2; ++a)
        states[j].mu_arm[a] = expit_vec(
            (logit_vec(states[j].mu_arm[a]) + ey * states[j].w_ratio_arm[a])
                .eval());
      for (int i = 0; i < states[j].n; ++i)
        states[j].mu_own[i] =
            states[j].a_col[i] != 0 ? states[j].mu_arm[1][i]
                                    : states[j].mu_arm[0][i];
    }
  } else {
    const Eigen::VectorXd mu_all =
        gather_fn(fold_rows, n_total, [&](int j) { return states[j].mu_own; });
    ey = weighted_intercept(y_all, mu_all, ratio_all);
    for (int j = 0; j < k; ++j) {
      for (int a = 0; a < 2; ++a) states[j].mu_arm[a].array() += ey;
      states[j].mu_own.array() += ey;
    }
  }
  progress.epsilon_history.emplace_back("Y", ey);

  // propensity update along kappa_1 - kappa_0
  double ea = 0.0;
  {
    const Eigen::VectorXd h_all = gather_fn(
        fold_rows, n_total, [&](int j) { return (states[j].kap1 - states[j].kap0).eval(); });
    const Eigen::VectorXd off_all = gather_fn(
        fold_rows, n_total, [&](int j) { return logit_vec(states[j].pi1); });
    const EpsFit fit = fit_eps_logistic(h_all, a_all, off_all);
    if (fit.fell_back) progress.warnings.push_back("eps_A fallback: " + fit.note);
    ea = fit.eps;
    for (int j = 0; j < k; ++j)
      states[j].pi1 = expit_vec(
          (logit_vec(states[j].pi1) + ea * (states[j].kap1 - states[j].kap0))
              .eval());
  }
  progress.epsilon_history.emplace_back("A", ea);

  // re-estimate gamma from the updated xi, then solve its score exactly
  for (int j = 0; j < k; ++j) {
    Eigen::VectorXd g = refit_gamma(j, states[j], ey, ea);
    if (g.size() != states[j].n)
      throw Error(ErrorCode::RowMismatch, "gamma refit length mismatch");
    states[j].gamma_v = std::move(g);
  }
  {
    const Eigen::VectorXd xi_all =
        gather_fn(fold_rows, n_total, [&](int j) { return states[j].xi(); });
    const Eigen::VectorXd gam_all = gather_fn(
        fold_rows, n_total, [&](int j) { return states[j].gamma_v; });
    const Eigen::VectorXd w_all =
        gather_fn(fold_rows, n_total, [&](int j) {
          const Eigen::VectorXd pia0 = states[j].pi_a0();
          Eigen::VectorXd w(states[j].n);
          for (int i = 0; i < states[j].n; ++i)
            w[i] = states[j].a_col[i] == static_cast<double>(states[j].a0)
                       ? 1.0 / pia0[i]
                       : 0.0;
          return w;
        });
    const double eg = weighted_intercept(xi_all, gam_all, w_all);
    for (int j = 0; j < k; ++j) states[j].gamma_v.array() += eg;
    progress.epsilon_history.emplace_back("gamma", eg);
  }

  std::vector<Eigen::VectorXd> gammas(k);
  for (int j = 0; j < k; ++j) gammas[j] = states[j].gamma_v;
  const double psi = fold_average(gammas);
  std::vector<EifParts> parts(k);
  for (int j = 0; j < k; ++j) parts[j] = states[j].eif(psi);
  EstimateResult out =
      finish_estimate(psi, gather_parts(fold_rows, n_total, parts));
  out.epsilon_history = std::move(progress.epsilon_history);
  out.iterations = 1;
  out.warnings = std::move(progress.warnings);
  return out;
}

// ---------------------------------------------------------------------------

EstimateResult crossfit_with_density(const Dataset& data,
                                     const EstimatorConfig& cfg,
                                     const FoldPlan& plan,
                                     const std::vector<NuisanceSetDensity>& qs) {
  if (qs.size() != plan.fold_rows.size())
    throw Error(ErrorCode::DimensionMismatch,
                "one nuisance set per fold required");
  const int k = static_cast<int>(qs.size());
  std::vector<Psi1Workspace> ws;
  ws.reserve(k);
  for (int j = 0; j < k; ++j)
    ws.push_back(Psi1Workspace::build(qs[j], subset_rows(data, plan.fold_rows[j]),
                                      cfg.a0, cfg.integration_grid_size));

  switch (cfg.estimator) {
    case EstimatorKind::Plugin1:
    case EstimatorKind::OneStep1: {
      double psi_acc = 0;
      for (int j = 0; j < k; ++j) {
        const double plug = ws[j].theta().mean();
        psi_acc += cfg.estimator == EstimatorKind::Plugin1
                       ? plug
                       : plug + ws[j].eif(plug).total().mean();
      }
      const double psi = psi_acc / k;
      std::vector<EifParts> parts(k);
      for (int j = 0; j < k; ++j) parts[j] = ws[j].eif(psi);
      return finish_estimate(psi, gather_parts(plan.fold_rows, data.n(), parts));
    }
    case EstimatorKind::Tmle1:
      return tmle_psi1_pooled(ws, plan.fold_rows, data.n(), cfg);
    case EstimatorKind::Tmle1Mod:
      return tmle_psi1_mod_pooled(ws, plan.fold_rows, data.n(), cfg);
    default:
      throw Error(ErrorCode::BadArgument,
                  "density nuisances passed to a ratio-parameterization "
                  "estimator");
  }
}

EstimateResult crossfit_with_ratio(const Dataset& data, const EstimatorConfig& cfg,
                                   const FoldPlan& plan,
                                   const std::vector<NuisanceSetRatio>& qs) {
  if (qs.size() != plan.fold_rows.size())
    throw Error(ErrorCode::DimensionMismatch,
                "one nuisance set per fold required");
  const int k = static_cast<int>(qs.size());
  const bool binary_y = cfg.outcome_kind == OutcomeKind::Binary;

  switch (cfg.estimator) {
    case EstimatorKind::Plugin2:
    case EstimatorKind::OneStep2a:
    case EstimatorKind::OneStep2b: {
      double psi_acc = 0;
      std::vector<Dataset> folds;
      folds.reserve(k);
      for (int j = 0; j < k; ++j) {
        folds.push_back(subset_rows(data, plan.fold_rows[j]));
        const double plug = plugin_psi2(qs[j], folds[j]);
        psi_acc += cfg.estimator == EstimatorKind::Plugin2
                       ? plug
                       : plug + eif_ratio(qs[j], folds[j], cfg.a0, plug)
                                    .total()
                                    .mean();
      }
      const double psi = psi_acc / k;
      std::vector<EifParts> parts(k);
      for (int j = 0; j < k; ++j)
        parts[j] = eif_ratio(qs[j], folds[j], cfg.a0, psi);
      return finish_estimate(psi, gather_parts(plan.fold_rows, data.n(), parts));
    }
    case EstimatorKind::Tmle2a:
    case EstimatorKind::Tmle2b: {
      for (int j = 0; j < k; ++j)
        if (binary_y && qs[j].fratio.kind() == DensityRatioModel::Kind::Plugged)
          throw Error(ErrorCode::UnsupportedKind,
                      "plugged ratios cannot be evaluated at counterfactual "
                      "arms, which the binary-outcome tilt requires; use the "
                      "Bayes-rule estimator");
      std::vector<Psi2State> states;
      states.reserve(k);
      for (int j = 0; j < k; ++j)
        states.push_back(build_psi2_state(
            qs[j], subset_rows(data, plan.fold_rows[j]), cfg.a0, binary_y));

      // gamma refit for fold j regresses the updated xi pseudo-outcome over
      // the complement's a0 rows, evaluated through fold-j nuisances with the
      // shared fluctuations applied, then predicts at fold-j rows.
      GammaRefit refit = [&data, &cfg, &plan, &qs, binary_y](
                             int fold, const Psi2State&, double eps_y,
                             double eps_a) {
        const auto& q = qs[fold];
        const std::vector<int> comp = plan.complement(fold);
        std::vector<int> arm_rows;
        for (int i : comp)
          if (data.a[i] == cfg.a0) arm_rows.push_back(i);
        if (arm_rows.size() < 2)
          throw Error(ErrorCode::InsufficientRowsInArm,
                      "gamma refit needs >= 2 complement rows in arm " +
                          std::to_string(cfg.a0));
        Eigen::MatrixXd x_sub(arm_rows.size(), data.p());
        Eigen::VectorXd xi_sub(arm_rows.size());
        for (std::size_t r = 0; r < arm_rows.size(); ++r) {
          const int i = arm_rows[r];
          const Eigen::RowVectorXd x = data.x.row(i);
          const Eigen::RowVectorXd m = data.m.row(i);
          const double h_pi = q.kappa1(x) - q.kappa0(x);
          const double p1 = expit(logit(q.pi1(x)) + eps_a * h_pi);
          double mu0 = q.mu(m, 0.0, x), mu1 = q.mu(m, 1.0, x);
          if (binary_y) {
            mu0 = expit(logit(mu0) + eps_y * q.fratio.ratio_row(i, m, 0.0, x));
            mu1 = expit(logit(mu1) + eps_y * q.fratio.ratio_row(i, m, 1.0, x));
          } else {
            mu0 += eps_y;
            mu1 += eps_y;
          }
          xi_sub[r] = mu0 * (1.0 - p1) + mu1 * p1;
          x_sub.row(r) = x;
        }
        const DesignSpec design{
            true, cfg.learner == LearnerSpec::WithPairwiseInteractions};
        LinearFit fit = fit_linear(x_sub, xi_sub, design);
        Eigen::MatrixXd x_fold(plan.fold_rows[fold].size(), data.p());
        for (std::size_t r = 0; r < plan.fold_rows[fold].size(); ++r)
          x_fold.row(r) = data.x.row(plan.fold_rows[fold][r]);
        return fit.predict(x_fold).eval();
      };
      return tmle_psi2_pooled(states, plan.fold_rows, data.n(), cfg, refit);
    }
    default:
      throw Error(ErrorCode::BadArgument,
                  "ratio nuisances passed to a density-parameterization "
                  "estimator");
  }
}

EstimateResult crossfit_estimate(const Dataset& data, const EstimatorConfig& cfg,
                                 const std::optional<DensityRatioModel>& plugged) {
  const FoldPlan plan = FoldPlan::build(data.n(), cfg.crossfit_folds, cfg.seed);
  const bool density_family = cfg.estimator == EstimatorKind::Plugin1 ||
                              cfg.estimator == EstimatorKind::OneStep1 ||
                              cfg.estimator == EstimatorKind::Tmle1 ||
                              cfg.estimator == EstimatorKind::Tmle1Mod;
  if (density_family) {
    std::vector<NuisanceSetDensity> qs;
    qs.reserve(plan.k);
    for (int j = 0; j < plan.k; ++j)
      qs.push_back(fit_density_set(subset_rows(data, plan.complement(j)), cfg));
    return crossfit_with_density(data, cfg, plan, qs);
  }

  std::vector<NuisanceSetRatio> qs;
  qs.reserve(plan.k);
  const bool plugged_rows =
      plugged && plugged->kind() == DensityRatioModel::Kind::Plugged;
  if (plugged_rows && plugged->per_row().size() != data.n())
    throw Error(ErrorCode::RowMismatch,
                "plugged ratio table must have one value per data row");
  for (int j = 0; j < plan.k; ++j) {
    const std::vector<int> comp = plan.complement(j);
    std::optional<DensityRatioModel> plug_fit = plugged;
    if (plugged_rows) {
      Eigen::VectorXd sub(comp.size());
      for (std::size_t r = 0; r < comp.size(); ++r)
        sub[r] = plugged->per_row()[comp[r]];
      plug_fit = DensityRatioModel::plugged(std::move(sub), plugged->a0());
    }
    NuisanceSetRatio q = fit_ratio_set(subset_rows(data, comp), cfg, plug_fit);
    if (plugged_rows) {
      // evaluation happens on the fold's rows, so swap in their ratio values
      Eigen::VectorXd sub(plan.fold_rows[j].size());
      for (std::size_t r = 0; r < plan.fold_rows[j].size(); ++r)
        sub[r] = plugged->per_row()[plan.fold_rows[j][r]];
      q.fratio = DensityRatioModel::plugged(std::move(sub), plugged->a0());
    }
    qs.push_back(std::move(q));
  }
  return crossfit_with_ratio(data, cfg, plan, qs);
}

}  // namespace fd
