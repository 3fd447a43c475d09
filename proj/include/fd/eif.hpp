#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "fd/config.hpp"
#include "fd/dataset.hpp"
#include "fd/nuisance.hpp"

namespace fd {

// Influence-function values split by score component; total = sum of parts.
struct EifParts {
  Eigen::VectorXd phi_y, phi_m, phi_a, phi_x;
  Eigen::VectorXd total() const { return phi_y + phi_m + phi_a + phi_x; }
};

struct EstimateResult {
  double psi = 0, se = 0, ci_lo = 0, ci_hi = 0;
  Eigen::VectorXd influence;  // per-row total EIF at the reported estimate
  std::map<std::string, double> score_residuals;
  std::vector<std::pair<std::string, double>> epsilon_history;
  int iterations = 0;
  bool converged = true;
  std::vector<std::string> warnings;
};

// Row-level evaluation of the density-parameterization nuisances, the common
// substrate for the plug-in, one-step, and targeted estimators. Binary
// mediators carry closed-form sums; continuous mediators carry a fixed
// quadrature grid so the density is only ever evaluated once per (row, node).
struct Psi1Workspace {
  int a0 = 1;
  bool binary_m = false;
  int n = 0;

  Eigen::VectorXd a_col, m_col, y_col;  // observed rows (univariate mediator)
  Eigen::VectorXd pi1;                  // current P(A=1 | X_i)

  // binary mediator state: mu_ma[m][a] = mu(m, a, X_i), f1[a] = f(1 | a, X_i)
  Eigen::VectorXd mu_ma[2][2];
  Eigen::VectorXd f1[2];

  // continuous mediator state
  Eigen::VectorXd grid_nodes, grid_w;
  Eigen::MatrixXd mu_grid[2];  // mu(node_g, a, X_i)
  Eigen::MatrixXd f_grid;      // f(node_g | a0, X_i)
  Eigen::VectorXd mu_obs[2];   // mu(M_i, a, X_i)
  Eigen::VectorXd f_obs_a0;    // f(M_i | a0, X_i), tracks fluctuations
  Eigen::VectorXd f_obs_own;   // f(M_i | A_i, X_i); frozen for A_i != a0

  Eigen::VectorXd mu_own;  // mu(M_i, A_i, X_i)

  static Psi1Workspace build(const NuisanceSetDensity& q, const Dataset& data,
                             int a0, int grid_size, bool parallel = true);

  Eigen::VectorXd pi_a0() const;           // P(A=a0 | X_i)
  Eigen::VectorXd xi_binary(int m) const;  // xi(m, X_i), binary mediator
  Eigen::VectorXd xi_obs() const;          // xi(M_i, X_i)
  Eigen::VectorXd eta(int a) const;        // eta(a, X_i)
  Eigen::VectorXd theta() const;           // theta(X_i)
  Eigen::VectorXd density_ratio() const;   // f(M_i|a0,X_i)/f(M_i|A_i,X_i)
  Eigen::VectorXd quad_mass() const;       // current f integrated over the grid

  // EIF components at the current state, centered at `psi`.
  EifParts eif(double psi) const;
};

// Plug-in estimators.
double plugin_psi1(const NuisanceSetDensity& q, const Dataset& data, int a0,
                   int grid_size);
double plugin_psi2(const NuisanceSetRatio& q, const Dataset& data);

// EIF evaluation for either parameterization.
EifParts eif_density(const NuisanceSetDensity& q, const Dataset& data, int a0,
                     double psi, int grid_size);
EifParts eif_ratio(const NuisanceSetRatio& q, const Dataset& data, int a0,
                   double psi);

// Wald inference from per-row influence values: se = sqrt(mean(phi^2)/n).
EstimateResult wald(double psi, const Eigen::VectorXd& influence);

// Wald result with the mean of each score component recorded.
EstimateResult finish_estimate(double psi, const EifParts& parts);

// Contrast of the two arm-specific results via differenced influence values.
EstimateResult ace(const EstimateResult& r1, const EstimateResult& r0);

}  // namespace fd
