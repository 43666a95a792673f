#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "fbsde/bsde.hpp"
#include "fbsde/brownian.hpp"
#include "fbsde/control.hpp"
#include "fbsde/errors.hpp"
#include "fbsde/forward.hpp"
#include "fbsde/lq.hpp"
#include "fbsde/problem.hpp"

namespace fbsde {

// Argument bundle for the Hamiltonians. A is the second-order argument of the
// generalized (HJB-side) Hamiltonian and is ignored by the first-order one.
struct HamiltonianInputs {
  double t = 0.0;
  Vec x;
  double y = 0.0;
  double z = 0.0;
  Vec p;   // n
  Vec q;   // n
  double k = 0.0;
  Vec u;   // control
  Mat A;   // n x n symmetric (generalized Hamiltonian only)
};

// H = <p, b> + <q, sigma> - k f
inline double hamiltonian(const HamiltonianInputs& in, const ProblemSpec& spec, double w = 0.0) {
  const Vec b = spec.b(in.t, in.x, in.u, w);
  const Vec s = spec.sigma(in.t, in.x, in.u, w);
  return in.p.dot(b) + in.q.dot(s) - in.k * spec.f(in.t, in.x, in.y, in.z, in.u, w);
}

// G = <p, b> + <q, sigma> + 1/2 tr(sigma sigma' A) + f(t, x, y, sigma'p + z, u)
inline double generalized_hamiltonian(const HamiltonianInputs& in, const ProblemSpec& spec,
                                      double w = 0.0) {
  const Vec b = spec.b(in.t, in.x, in.u, w);
  const Vec s = spec.sigma(in.t, in.x, in.u, w);
  const double trace_term = 0.5 * s.dot(in.A * s);
  const double z_shifted = s.dot(in.p) + in.z;
  return in.p.dot(b) + in.q.dot(s) + trace_term +
         spec.f(in.t, in.x, in.y, z_shifted, in.u, w);
}

// H_u = b_u' p + sigma_u' q - k f_u along a path point.
inline Vec hamiltonian_u(const ProblemSpec& spec, double t, const Vec& x, double y, double z,
                         const Vec& p, const Vec& q, double k, const Vec& u, double w) {
  return spec.bu(t, x, u, w).transpose() * p + spec.sigmau(t, x, u, w).transpose() * q -
         k * spec.fu(t, x, y, z, u, w);
}

// Multiplier of the backward equation: the forward linear SDE
//   dk = k f_y dt + k f_z dW,   k_0 = -1,
// integrated by Euler-Maruyama along each path with (Y, Z) taken from the
// solved backward equation.
inline Eigen::MatrixXd solve_k_general(const ProblemSpec& spec, const StatePaths& states,
                                       const ControlLaw& law, const BrownianDriver& driver,
                                       const BsdeSolution& bsde) {
  const TimeGrid& grid = states.grid;
  Eigen::MatrixXd k(driver.M, grid.N + 1);
  for (int m = 0; m < driver.M; ++m) {
    k(m, 0) = -1.0;
    for (int j = 0; j < grid.N; ++j) {
      const double t = grid.nodes[j];
      const double w = driver.level(m, j);
      const Vec x = states.X.at(m, j);
      const Vec u = law.value(m, j, t, x, w);
      const double y = bsde.Y(m, j);
      const double z = bsde.Z(m, j);
      const double fy = spec.fy(t, x, y, z, u, w);
      const double fz = spec.fz(t, x, y, z, u, w);
      k(m, j + 1) = k(m, j) * (1.0 + fy * grid.dt + fz * driver.dW(m, j));
    }
  }
  return k;
}

// Adjoint pair (p, q): the linear BSDE
//   dp = -[b_x' p + sigma_x' q - k f_x] dt + q dW,   p_T = -h_x(X_T) k_T.
inline AdjointTriple solve_adjoint_general(const ProblemSpec& spec, const StatePaths& states,
                                           const ControlLaw& law, const Eigen::MatrixXd& k,
                                           const BsdeSolution& bsde,
                                           const BrownianDriver& driver,
                                           const RegressionBasis& basis) {
  const TimeGrid& grid = states.grid;
  const int M = driver.M;
  Eigen::MatrixXd terminal(M, spec.n);
  for (int m = 0; m < M; ++m) {
    const double wT = driver.level(m, grid.N);
    terminal.row(m) = -k(m, grid.N) * spec.hx(states.X.at(m, grid.N), wT);
  }
  LinearTermFn terms = [&](int m, int j, Mat& alpha, Mat& beta, Vec& gamma) {
    const double t = grid.nodes[j];
    const double w = driver.level(m, j);
    const Vec x = states.X.at(m, j);
    const Vec u = law.value(m, j, t, x, w);
    const double y = bsde.Y(m, j);
    const double z = bsde.Z(m, j);
    alpha = spec.bx(t, x, u, w).transpose();
    beta = spec.sigmax(t, x, u, w).transpose();
    gamma = -k(m, j) * spec.fx(t, x, y, z, u, w);
  };
  const VectorBsdeSolution sol =
      solve_linear_bsde_vec(spec.n, terminal, terms, states, driver, basis);
  AdjointTriple out;
  out.p = sol.Y;
  out.q = sol.Z;
  out.k = k;
  return out;
}

// Linearized dynamics along a control perturbation direction u1 (|u1| <= 1
// pointwise): forward linear SDE for X1, backward linear BSDE for (Y1, Z1).
struct VariationalSolution {
  PathTensor X1;        // M x (N+1) x n
  Eigen::MatrixXd Y1;   // M x (N+1)
  Eigen::MatrixXd Z1;   // M x N
  PathTensor u1;        // M x N x k
  Eigen::VectorXd pathwise_y1;  // per-path plain-MC accumulation of Y1
  bool antithetic = false;
};

inline VariationalSolution solve_variational(const ProblemSpec& spec, const StatePaths& states,
                                             const ControlLaw& law, const BsdeSolution& bsde,
                                             const PathTensor& u1, const BrownianDriver& driver,
                                             const RegressionBasis& basis) {
  const TimeGrid& grid = states.grid;
  const int M = driver.M;
  const int n = spec.n;

  VariationalSolution out;
  out.u1 = u1;
  out.antithetic = driver.antithetic;
  out.X1 = PathTensor(M, grid.N + 1, n);

  for (int m = 0; m < M; ++m) {
    for (int j = 0; j < grid.N; ++j) {
      if (u1.at(m, j).norm() > 1.0 + 1e-12)
        throw ConfigError("variational direction exceeds the unit normalization |u1| <= 1");
    }
  }

  // forward: dX1 = (b_x X1 + b_u u1) dt + (sigma_x X1 + sigma_u u1) dW, X1_0 = 0
  for (int m = 0; m < M; ++m) {
    Vec x1 = Vec::Zero(n);
    out.X1.at(m, 0) = x1;
    for (int j = 0; j < grid.N; ++j) {
      const double t = grid.nodes[j];
      const double w = driver.level(m, j);
      const Vec x = states.X.at(m, j);
      const Vec u = law.value(m, j, t, x, w);
      const Vec d1 = u1.at(m, j);
      x1 += (spec.bx(t, x, u, w) * x1 + spec.bu(t, x, u, w) * d1) * grid.dt +
            (spec.sigmax(t, x, u, w) * x1 + spec.sigmau(t, x, u, w) * d1) * driver.dW(m, j);
      detail::check_finite(x1, m, j + 1);
      out.X1.at(m, j + 1) = x1;
    }
  }

  // backward: dY1 = -(f_x X1 + f_y Y1 + f_z Z1 + f_u u1) dt + Z1 dW,
  //           Y1_T = h_x(X_T) X1_T
  Eigen::MatrixXd alpha(M, grid.N), beta(M, grid.N), gamma(M, grid.N);
  Eigen::VectorXd terminal(M);
  for (int m = 0; m < M; ++m) {
    const double wT = driver.level(m, grid.N);
    terminal[m] = spec.hx(states.X.at(m, grid.N), wT).dot(out.X1.at(m, grid.N));
    for (int j = 0; j < grid.N; ++j) {
      const double t = grid.nodes[j];
      const double w = driver.level(m, j);
      const Vec x = states.X.at(m, j);
      const Vec u = law.value(m, j, t, x, w);
      const double y = bsde.Y(m, j);
      const double z = bsde.Z(m, j);
      alpha(m, j) = spec.fy(t, x, y, z, u, w);
      beta(m, j) = spec.fz(t, x, y, z, u, w);
      gamma(m, j) = spec.fx(t, x, y, z, u, w).dot(out.X1.at(m, j)) +
                    spec.fu(t, x, y, z, u, w).dot(u1.at(m, j));
    }
  }
  Eigen::MatrixXd term(M, 1);
  term.col(0) = terminal;
  auto drift = [&](int j, int m, const Vec& yhat, const Vec& z) -> Vec {
    Vec o(1);
    o[0] = alpha(m, j) * yhat[0] + beta(m, j) * z[0] + gamma(m, j);
    return o;
  };
  Eigen::MatrixXd pathwise;
  const VectorBsdeSolution sol = detail::solve_backward_window(
      states, driver, basis, spec.n, states.start_index, grid.N, term, drift, &pathwise);
  const BsdeSolution scalar = detail::to_scalar(sol);
  out.Y1 = scalar.Y;
  out.Z1 = scalar.Z;
  out.pathwise_y1 = pathwise.col(0);
  return out;
}

// The Gateaux derivative of the cost in the direction u1 is Y1 at the start
// node; reported with its Monte Carlo standard error.
inline CostEstimate gateaux_derivative(const VariationalSolution& variational) {
  const auto [mean, se] = mc_mean_stderr(variational.pathwise_y1, variational.antithetic);
  return {mean, se};
}

// First-order condition screen: evaluates H_u (u - ubar) over a finite control
// grid and counts violations below -tol, where tol is rel_tol times the RMS
// magnitude of the dominant H_u term scaled by |u - ubar|.
struct FirstOrderReport {
  double violation_fraction = 0.0;
  double worst_normalized = 0.0;  // most negative H_u (u-ubar) / (href |u-ubar|)
  double href = 0.0;              // RMS dominant term magnitude
  double rel_tol = 0.0;
  long checks = 0;
};

inline FirstOrderReport first_order_condition_check(
    const ProblemSpec& spec, const StatePaths& states, const ControlLaw& law,
    const AdjointTriple& adjoint, const Eigen::MatrixXd& k, const BsdeSolution& bsde,
    const BrownianDriver& driver, const std::vector<Vec>& control_grid, double rel_tol = 0.05) {
  if (control_grid.empty()) throw ConfigError("first_order_condition_check: empty control grid");
  const TimeGrid& grid = states.grid;
  const int M = states.X.paths();

  // pass 1: H_u along paths and the dominant-term scale
  std::vector<Vec> hu(static_cast<size_t>(M) * grid.N);
  std::vector<Vec> ubar(static_cast<size_t>(M) * grid.N);
  double ss_dom = 0.0;
  for (int m = 0; m < M; ++m) {
    for (int j = 0; j < grid.N; ++j) {
      const double t = grid.nodes[j];
      const double w = driver.level(m, j);
      const Vec x = states.X.at(m, j);
      const Vec u = law.value(m, j, t, x, w);
      const double y = bsde.Y(m, j);
      const double z = bsde.Z(m, j);
      const Vec term_b = spec.bu(t, x, u, w).transpose() * adjoint.p.at(m, j);
      const Vec term_s = spec.sigmau(t, x, u, w).transpose() * adjoint.q.at(m, j);
      const Vec term_f = k(m, j) * spec.fu(t, x, y, z, u, w);
      hu[static_cast<size_t>(m) * grid.N + j] = term_b + term_s - term_f;
      ubar[static_cast<size_t>(m) * grid.N + j] = u;
      const double dom = std::max({term_b.cwiseAbs().maxCoeff(), term_s.cwiseAbs().maxCoeff(),
                                   term_f.cwiseAbs().maxCoeff()});
      ss_dom += dom * dom;
    }
  }
  FirstOrderReport rep;
  rep.rel_tol = rel_tol;
  rep.href = std::sqrt(ss_dom / (static_cast<double>(M) * grid.N));

  // pass 2: violations of H_u (u - ubar) >= -tol over the grid
  long violations = 0, checks = 0;
  double worst = 0.0;
  const double floor = 1e-300;
  for (int m = 0; m < M; ++m) {
    for (int j = 0; j < grid.N; ++j) {
      const Vec& g = hu[static_cast<size_t>(m) * grid.N + j];
      const Vec& u0 = ubar[static_cast<size_t>(m) * grid.N + j];
      for (const Vec& u : control_grid) {
        const Vec diff = u - u0;
        const double norm = diff.norm();
        if (norm < floor) continue;  // grid point equals the law's value
        const double product = g.dot(diff);
        const double normalized = product / (std::max(rep.href, floor) * norm);
        worst = std::min(worst, normalized);
        if (normalized < -rel_tol) ++violations;
        ++checks;
      }
    }
  }
  rep.checks = checks;
  rep.violation_fraction = checks > 0 ? static_cast<double>(violations) / checks : 0.0;
  rep.worst_normalized = worst;
  return rep;
}

}  // namespace fbsde
