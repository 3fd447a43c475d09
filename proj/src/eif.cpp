#include "fd/eif.hpp"

#include <cmath>

#include "fd/errors.hpp"
#include "fd/parallel.hpp"

namespace fd {

namespace {

constexpr double kZ975 = 1.959964;

Eigen::RowVectorXd scalar_row(double m) {
  Eigen::RowVectorXd r(1);
  r[0] = m;
  return r;
}

}  // namespace

Psi1Workspace Psi1Workspace::build(const NuisanceSetDensity& q,
                                   const Dataset& data, int a0, int grid_size,
                                   bool parallel) {
  if (data.d() != 1)
    throw Error(ErrorCode::UnsupportedKind,
                "density parameterization needs a univariate mediator");
  Psi1Workspace w;
  w.a0 = a0;
  w.binary_m = data.mediator_kind == MediatorKind::Binary;
  if (w.binary_m != q.fm.is_binary())
    throw Error(ErrorCode::UnsupportedKind,
                "mediator kind and density model kind disagree");
  w.n = data.n();
  w.a_col = data.a;
  w.m_col = data.m.col(0);
  w.y_col = data.y;

  w.pi1.resize(w.n);
  auto fill_pi = [&](std::ptrdiff_t i) { w.pi1[i] = q.pi1(data.x.row(i)); };
  if (parallel)
    par::parallel_for(w.n, fill_pi);
  else
    par::serial_for(w.n, fill_pi);

  if (w.binary_m) {
    for (int m = 0; m < 2; ++m)
      for (int a = 0; a < 2; ++a) w.mu_ma[m][a].resize(w.n);
    for (int a = 0; a < 2; ++a) w.f1[a].resize(w.n);
    auto body = [&](std::ptrdiff_t i) {
      const Eigen::RowVectorXd x = data.x.row(i);
      for (int m = 0; m < 2; ++m)
        for (int a = 0; a < 2; ++a)
          w.mu_ma[m][a][i] = q.mu(scalar_row(m), a, x);
      for (int a = 0; a < 2; ++a) w.f1[a][i] = q.fm.prob1(a, x);
    };
    if (parallel)
      par::parallel_for(w.n, body);
    else
      par::serial_for(w.n, body);
    w.mu_own.resize(w.n);
    for (int i = 0; i < w.n; ++i) {
      const int ai = data.a[i] != 0 ? 1 : 0;
      const int mi = data.m(i, 0) != 0 ? 1 : 0;
      w.mu_own[i] = w.mu_ma[mi][ai][i];
    }
    return w;
  }

  make_grid(q.fm.grid_lo(), q.fm.grid_hi(), grid_size, w.grid_nodes, w.grid_w);
  const int g = grid_size;
  for (int a = 0; a < 2; ++a) {
    w.mu_grid[a].resize(w.n, g);
    w.mu_obs[a].resize(w.n);
  }
  auto body = [&](std::ptrdiff_t i) {
    const Eigen::RowVectorXd x = data.x.row(i);
    for (int a = 0; a < 2; ++a) {
      for (int q_i = 0; q_i < g; ++q_i)
        w.mu_grid[a](i, q_i) = q.mu(scalar_row(w.grid_nodes[q_i]), a, x);
      w.mu_obs[a][i] = q.mu(scalar_row(data.m(i, 0)), a, x);
    }
  };
  if (parallel)
    par::parallel_for(w.n, body);
  else
    par::serial_for(w.n, body);

  w.f_grid = q.fm.eval_grid(w.grid_nodes, static_cast<double>(a0), data.x, parallel);
  w.f_obs_a0 = q.fm.eval_batch(
      w.m_col, Eigen::VectorXd::Constant(w.n, static_cast<double>(a0)), data.x,
      parallel);
  w.f_obs_own.resize(w.n);
  Eigen::VectorXd other = q.fm.eval_batch(w.m_col, w.a_col, data.x, parallel);
  for (int i = 0; i < w.n; ++i)
    w.f_obs_own[i] = (w.a_col[i] == static_cast<double>(a0)) ? w.f_obs_a0[i]
                                                             : other[i];
  w.mu_own.resize(w.n);
  for (int i = 0; i < w.n; ++i) {
    const int ai = w.a_col[i] != 0 ? 1 : 0;
    w.mu_own[i] = w.mu_obs[ai][i];
  }
  return w;
}

Eigen::VectorXd Psi1Workspace::pi_a0() const {
  return a0 == 1 ? pi1 : (1.0 - pi1.array()).matrix();
}

Eigen::VectorXd Psi1Workspace::xi_binary(int m) const {
  return mu_ma[m][0].cwiseProduct((1.0 - pi1.array()).matrix()) +
         mu_ma[m][1].cwiseProduct(pi1);
}

Eigen::VectorXd Psi1Workspace::xi_obs() const {
  if (binary_m) {
    const Eigen::VectorXd xi0 = xi_binary(0), xi1 = xi_binary(1);
    Eigen::VectorXd out(n);
    for (int i = 0; i < n; ++i) out[i] = m_col[i] != 0 ? xi1[i] : xi0[i];
    return out;
  }
  return mu_obs[0].cwiseProduct((1.0 - pi1.array()).matrix()) +
         mu_obs[1].cwiseProduct(pi1);
}

Eigen::VectorXd Psi1Workspace::eta(int a) const {
  if (binary_m) {
    const Eigen::VectorXd& fa0 = f1[a0];
    return mu_ma[0][a].cwiseProduct((1.0 - fa0.array()).matrix()) +
           mu_ma[1][a].cwiseProduct(fa0);
  }
  return (mu_grid[a].array() * f_grid.array()).matrix() * grid_w;
}

Eigen::VectorXd Psi1Workspace::theta() const {
  if (binary_m) {
    const Eigen::VectorXd& fa0 = f1[a0];
    return xi_binary(0).cwiseProduct((1.0 - fa0.array()).matrix()) +
           xi_binary(1).cwiseProduct(fa0);
  }
  Eigen::MatrixXd xi_grid =
      mu_grid[0].array().colwise() * (1.0 - pi1.array());
  xi_grid.array() += mu_grid[1].array().colwise() * pi1.array();
  return (xi_grid.array() * f_grid.array()).matrix() * grid_w;
}

Eigen::VectorXd Psi1Workspace::density_ratio() const {
  Eigen::VectorXd out(n);
  const double a0_d = static_cast<double>(a0);
  if (binary_m) {
    for (int i = 0; i < n; ++i) {
      if (a_col[i] == a0_d) {
        out[i] = 1.0;
        continue;
      }
      const int ai = a_col[i] != 0 ? 1 : 0;
      const double num = m_col[i] != 0 ? f1[a0][i] : 1.0 - f1[a0][i];
      const double den = m_col[i] != 0 ? f1[ai][i] : 1.0 - f1[ai][i];
      out[i] = num / std::max(den, 1e-12);
    }
    return out;
  }
  for (int i = 0; i < n; ++i)
    out[i] = a_col[i] == a0_d ? 1.0 : f_obs_a0[i] / std::max(f_obs_own[i], 1e-12);
  return out;
}

Eigen::VectorXd Psi1Workspace::quad_mass() const {
  if (binary_m) return Eigen::VectorXd::Ones(n);
  return f_grid * grid_w;
}

EifParts Psi1Workspace::eif(double psi) const {
  EifParts parts;
  const Eigen::VectorXd ratio = density_ratio();
  parts.phi_y = ratio.cwiseProduct(y_col - mu_own);

  const Eigen::VectorXd theta_v = theta();
  const Eigen::VectorXd xiobs = xi_obs();
  const Eigen::VectorXd pia0 = pi_a0();
  const double a0_d = static_cast<double>(a0);
  parts.phi_m.resize(n);
  for (int i = 0; i < n; ++i)
    parts.phi_m[i] =
        a_col[i] == a0_d ? (xiobs[i] - theta_v[i]) / pia0[i] : 0.0;

  parts.phi_a = (eta(1) - eta(0)).cwiseProduct(a_col - pi1);
  parts.phi_x = (theta_v.array() - psi).matrix();
  return parts;
}

double plugin_psi1(const NuisanceSetDensity& q, const Dataset& data, int a0,
                   int grid_size) {
  return Psi1Workspace::build(q, data, a0, grid_size).theta().mean();
}

double plugin_psi2(const NuisanceSetRatio& q, const Dataset& data) {
  double total = 0.0;
  for (int i = 0; i < data.n(); ++i) total += q.gamma(data.x.row(i));
  return total / data.n();
}

EifParts eif_density(const NuisanceSetDensity& q, const Dataset& data, int a0,
                     double psi, int grid_size) {
  return Psi1Workspace::build(q, data, a0, grid_size).eif(psi);
}

EifParts eif_ratio(const NuisanceSetRatio& q, const Dataset& data, int a0,
                   double psi) {
  const int n = data.n();
  EifParts parts;
  parts.phi_y.resize(n);
  parts.phi_m.resize(n);
  parts.phi_a.resize(n);
  parts.phi_x.resize(n);
  const double a0_d = static_cast<double>(a0);
  for (int i = 0; i < n; ++i) {
    const Eigen::RowVectorXd x = data.x.row(i);
    const Eigen::RowVectorXd m = data.m.row(i);
    const double p1 = q.pi1(x);
    const double pia0 = a0 == 1 ? p1 : 1.0 - p1;
    const double mu_own = q.mu(m, data.a[i], x);
    const double xi = q.mu(m, 0.0, x) * (1.0 - p1) + q.mu(m, 1.0, x) * p1;
    const double w = q.fratio.ratio_row(i, m, data.a[i], x);
    const double gam = q.gamma(x);
    parts.phi_y[i] = w * (data.y[i] - mu_own);
    parts.phi_m[i] = data.a[i] == a0_d ? (xi - gam) / pia0 : 0.0;
    parts.phi_a[i] =
        (q.kappa1(x) - q.kappa0(x)) * (data.a[i] - p1);
    parts.phi_x[i] = gam - psi;
  }
  return parts;
}

EstimateResult wald(double psi, const Eigen::VectorXd& influence) {
  EstimateResult r;
  r.psi = psi;
  r.influence = influence;
  const double n = static_cast<double>(influence.size());
  r.se = std::sqrt(influence.squaredNorm() / n / n);
  r.ci_lo = psi - kZ975 * r.se;
  r.ci_hi = psi + kZ975 * r.se;
  return r;
}

EstimateResult finish_estimate(double psi, const EifParts& parts) {
  EstimateResult r = wald(psi, parts.total());
  const double n = static_cast<double>(parts.phi_y.size());
  r.score_residuals["phi_y"] = parts.phi_y.sum() / n;
  r.score_residuals["phi_m"] = parts.phi_m.sum() / n;
  r.score_residuals["phi_a"] = parts.phi_a.sum() / n;
  r.score_residuals["phi_x"] = parts.phi_x.sum() / n;
  return r;
}

EstimateResult ace(const EstimateResult& r1, const EstimateResult& r0) {
  if (r1.influence.size() != r0.influence.size())
    throw Error(ErrorCode::RowMismatch, "contrast needs matching row counts");
  EstimateResult r = wald(r1.psi - r0.psi, r1.influence - r0.influence);
  r.iterations = std::max(r1.iterations, r0.iterations);
  r.converged = r1.converged && r0.converged;
  for (const auto& w : r1.warnings) r.warnings.push_back("a0=1: " + w);
  for (const auto& w : r0.warnings) r.warnings.push_back("a0=0: " + w);
  return r;
}

}  // namespace fd
