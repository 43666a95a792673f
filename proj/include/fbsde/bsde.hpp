#pragma once

#include <functional>
#include <utility>

#include <Eigen/Dense>

#include "fbsde/brownian.hpp"
#include "fbsde/control.hpp"
#include "fbsde/errors.hpp"
#include "fbsde/forward.hpp"
#include "fbsde/paths.hpp"
#include "fbsde/problem.hpp"
#include "fbsde/regression.hpp"

namespace fbsde {

// Backward least-squares Monte Carlo solution of a scalar BSDE.
struct BsdeSolution {
  Eigen::MatrixXd Y;  // M x (N+1)
  Eigen::MatrixXd Z;  // M x N
  TimeGrid grid;
};

// Vector-valued counterpart (used for adjoint processes).
struct VectorBsdeSolution {
  PathTensor Y;  // M x (N+1) x d
  PathTensor Z;  // M x N x d
  TimeGrid grid;
};

struct CostEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

namespace detail {

// One backward pass over the window [k_begin, k_end]:
//   Y_{k_end} = terminal;
//   for k = k_end-1 .. k_begin:
//     Yhat_k = L2 projection of Y_{k+1} on the basis at (X_k, W_k)
//     Z_k    = projection of (Y_{k+1} - Yhat_k) * dW_k / dt   (the martingale
//              part only; subtracting the continuation value removes the
//              O(1/dt) variance of the plain Y*dW/dt regressand)
//     Y_k    = Yhat_k + dt * drift(k, m, Yhat_k, Z_k)
//
// The explicit step is stable for dt below 1/(2K) when the drift is
// K-Lipschitz in (y, z); all shipped experiments run well inside that range.
//
// drift(k, m, yhat, z) must return the d-vector drift for path m at node k.
//
// When requested, pathwise_sum receives terminal + sum_k dt * drift_k per
// path. Because least squares with an intercept preserves means, its average
// equals the average of Y at k_begin exactly, while its spread is the plain
// Monte Carlo dispersion, which is what an honest standard error needs.
template <class DriftFn>
inline VectorBsdeSolution solve_backward_window(const StatePaths& states,
                                                const BrownianDriver& driver,
                                                const RegressionBasis& basis, int n_state,
                                                int k_begin, int k_end,
                                                const Eigen::MatrixXd& terminal,
                                                const DriftFn& drift,
                                                Eigen::MatrixXd* pathwise_sum = nullptr) {
  const TimeGrid& grid = states.grid;
  const int M = driver.M;
  const int d = static_cast<int>(terminal.cols());
  if (k_begin < 0 || k_end > grid.N || k_begin > k_end)
    throw ConfigError("bsde window out of range");

  VectorBsdeSolution sol;
  sol.grid = grid;
  sol.Y = PathTensor(M, grid.N + 1, d);
  sol.Z = PathTensor(M, grid.N, d);
  for (int m = 0; m < M; ++m) sol.Y.at(m, k_end) = terminal.row(m);

  if (pathwise_sum) *pathwise_sum = terminal;
  if (k_begin == k_end) return sol;

  const CompiledBasis cb(basis, n_state);
  const int B = cb.count();
  Eigen::MatrixXd feats(M, B);
  Eigen::MatrixXd next(M, d), yhat(M, d), zfit(M, d), resid(M, d);
  Eigen::VectorXd row(B);

  for (int k = k_end - 1; k >= k_begin; --k) {
    for (int m = 0; m < M; ++m) {
      cb.eval(states.X.at(m, k), driver.level(m, k), row);
      feats.row(m) = row;
      next.row(m) = sol.Y.at(m, k + 1);
    }
    const LinearFit fy = fit_ridge(feats, next, basis.ridge);
    fy.predict(feats, yhat);

    for (int m = 0; m < M; ++m)
      resid.row(m) = (next.row(m) - yhat.row(m)) * (driver.dW(m, k) / grid.dt);
    const LinearFit fz = fit_ridge(feats, resid, basis.ridge);
    fz.predict(feats, zfit);

    for (int m = 0; m < M; ++m) {
      const Eigen::VectorXd yh = yhat.row(m);
      const Eigen::VectorXd zz = zfit.row(m);
      const Eigen::VectorXd dr = drift(k, m, yh, zz);
      sol.Z.at(m, k) = zz;
      sol.Y.at(m, k) = yh + grid.dt * dr;
      if (pathwise_sum) pathwise_sum->row(m) += grid.dt * dr.transpose();
    }
  }
  return sol;
}

inline BsdeSolution to_scalar(const VectorBsdeSolution& v) {
  BsdeSolution s;
  s.grid = v.grid;
  const int M = v.Y.paths();
  s.Y.resize(M, v.Y.nodes());
  s.Z.resize(M, v.Z.nodes());
  for (int m = 0; m < M; ++m) {
    for (int k = 0; k < v.Y.nodes(); ++k) s.Y(m, k) = v.Y.scalar(m, k);
    for (int k = 0; k < v.Z.nodes(); ++k) s.Z(m, k) = v.Z.scalar(m, k);
  }
  return s;
}

}  // namespace detail

// Solves dY = -f(t, X, Y, Z, u) dt + Z dW, Y_T = h(X_T), along the given
// state paths. The terminal column equals h(X_T) exactly.
inline BsdeSolution solve_bsde(const ProblemSpec& spec, const StatePaths& states,
                               const ControlLaw& law, const BrownianDriver& driver,
                               const RegressionBasis& basis) {
  const TimeGrid& grid = states.grid;
  const int M = driver.M;
  Eigen::MatrixXd terminal(M, 1);
  for (int m = 0; m < M; ++m)
    terminal(m, 0) = spec.h(states.X.at(m, grid.N), driver.level(m, grid.N));
  auto drift = [&](int k, int m, const Vec& yhat, const Vec& z) -> Vec {
    const double t = grid.nodes[k];
    const double w = driver.level(m, k);
    const Vec x = states.X.at(m, k);
    const Vec u = law.value(m, k, t, x, w);
    Vec out(1);
    out[0] = spec.f(t, x, yhat[0], z[0], u, w);
    return out;
  };
  return detail::to_scalar(detail::solve_backward_window(states, driver, basis, spec.n,
                                                         states.start_index, grid.N, terminal,
                                                         drift));
}

// Recursive cost J = Y at the start node: cross-path average plus its Monte
// Carlo standard error (from the pathwise Monte Carlo dispersion, so antithetic
// pairing is respected).
inline CostEstimate cost_functional(const ProblemSpec& spec, const ControlLaw& law, const Vec& x0,
                                    const TimeGrid& grid, const BrownianDriver& driver,
                                    const RegressionBasis& basis,
                                    Eigen::VectorXd* per_path = nullptr) {
  const StatePaths states = simulate_forward(spec, law, x0, grid, driver);
  const int M = driver.M;
  Eigen::MatrixXd terminal(M, 1);
  for (int m = 0; m < M; ++m)
    terminal(m, 0) = spec.h(states.X.at(m, grid.N), driver.level(m, grid.N));
  auto drift = [&](int k, int m, const Vec& yhat, const Vec& z) -> Vec {
    const double t = grid.nodes[k];
    const double w = driver.level(m, k);
    const Vec x = states.X.at(m, k);
    const Vec u = law.value(m, k, t, x, w);
    Vec out(1);
    out[0] = spec.f(t, x, yhat[0], z[0], u, w);
    return out;
  };
  Eigen::MatrixXd pathwise;
  const VectorBsdeSolution sol = detail::solve_backward_window(
      states, driver, basis, spec.n, 0, grid.N, terminal, drift, &pathwise);
  double mean_y0 = 0.0;
  for (int m = 0; m < M; ++m) mean_y0 += sol.Y.scalar(m, 0);
  mean_y0 /= M;
  const double se = mc_mean_stderr(pathwise.col(0), driver.antithetic).second;
  if (per_path) *per_path = pathwise.col(0);
  return {mean_y0, se};
}

// Backward semigroup over [t_index, t_index + delta_steps]: restart the state
// at (t_index, x), solve the BSDE with the supplied terminal values eta, and
// report Y at the start of the window. delta_steps == 0 returns the mean of
// eta.
inline CostEstimate backward_semigroup(const ProblemSpec& spec, const ControlLaw& law,
                                       int t_index, int delta_steps, const Vec& x,
                                       const Eigen::VectorXd& eta, const TimeGrid& grid,
                                       const BrownianDriver& driver,
                                       const RegressionBasis& basis) {
  if (t_index < 0 || delta_steps < 0 || t_index + delta_steps > grid.N)
    throw ConfigError("backward_semigroup: window out of range");
  const StatePaths states = restart_forward(spec, law, t_index, x, grid, driver);
  const int M = driver.M;
  Eigen::MatrixXd terminal(M, 1);
  terminal.col(0) = eta;
  auto drift = [&](int k, int m, const Vec& yhat, const Vec& z) -> Vec {
    const double t = grid.nodes[k];
    const double w = driver.level(m, k);
    const Vec xv = states.X.at(m, k);
    const Vec u = law.value(m, k, t, xv, w);
    Vec out(1);
    out[0] = spec.f(t, xv, yhat[0], z[0], u, w);
    return out;
  };
  Eigen::MatrixXd pathwise;
  const VectorBsdeSolution sol =
      detail::solve_backward_window(states, driver, basis, spec.n, t_index,
                                    t_index + delta_steps, terminal, drift, &pathwise);
  double mean_y = 0.0;
  for (int m = 0; m < M; ++m) mean_y += sol.Y.scalar(m, t_index);
  mean_y /= M;
  const auto [mean_eta, se] = mc_mean_stderr(pathwise.col(0), driver.antithetic);
  if (delta_steps == 0) return {mean_eta, se};
  return {mean_y, se};
}

// Scalar linear BSDE dY = -(alpha Y + beta Z + gamma) dt + Z dW with
// per-path, per-step coefficient arrays (all M x N) and terminal values.
inline BsdeSolution solve_linear_bsde(const Eigen::VectorXd& terminal,
                                      const Eigen::MatrixXd& alpha, const Eigen::MatrixXd& beta,
                                      const Eigen::MatrixXd& gamma, const StatePaths& states,
                                      const BrownianDriver& driver,
                                      const RegressionBasis& basis) {
  const int M = driver.M;
  Eigen::MatrixXd term(M, 1);
  term.col(0) = terminal;
  auto drift = [&](int k, int m, const Vec& yhat, const Vec& z) -> Vec {
    Vec out(1);
    out[0] = alpha(m, k) * yhat[0] + beta(m, k) * z[0] + gamma(m, k);
    return out;
  };
  const int n_state = states.X.dim();
  return detail::to_scalar(detail::solve_backward_window(
      states, driver, basis, n_state, states.start_index, states.grid.N, term, drift));
}

// Vector linear BSDE dY = -(alpha Y + beta Z + gamma) dt + Z dW in R^d; the
// coefficient callback fills (alpha, beta, gamma) for a given (path, step).
using LinearTermFn = std::function<void(int m, int k, Mat& alpha, Mat& beta, Vec& gamma)>;

inline VectorBsdeSolution solve_linear_bsde_vec(int d, const Eigen::MatrixXd& terminal,
                                                const LinearTermFn& terms,
                                                const StatePaths& states,
                                                const BrownianDriver& driver,
                                                const RegressionBasis& basis) {
  Mat alpha(d, d), beta(d, d);
  Vec gamma(d);
  auto drift = [&](int k, int m, const Vec& yhat, const Vec& z) -> Vec {
    terms(m, k, alpha, beta, gamma);
    return alpha * yhat + beta * z + gamma;
  };
  const int n_state = states.X.dim();
  return detail::solve_backward_window(states, driver, basis, n_state, states.start_index,
                                       states.grid.N, terminal, drift);
}

}  // namespace fbsde
