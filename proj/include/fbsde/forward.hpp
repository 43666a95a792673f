#pragma once

#include <string>

#include <Eigen/Dense>

#include "fbsde/brownian.hpp"
#include "fbsde/control.hpp"
#include "fbsde/errors.hpp"
#include "fbsde/paths.hpp"
#include "fbsde/problem.hpp"
#include "fbsde/time_grid.hpp"

namespace fbsde {

// Euler-Maruyama paths of the controlled state equation.
struct StatePaths {
  PathTensor X;  // M x (N+1) x n
  TimeGrid grid;
  int start_index = 0;  // nodes before this hold the (constant) start state
};

// Paths of the state's Jacobian with respect to its initial condition.
struct FlowPaths {
  PathTensor dX;  // M x (N+1) x n*n, row-major n x n blocks
  TimeGrid grid;
};

namespace detail {

inline void check_finite(const Eigen::Ref<const Vec>& x, int m, int k) {
  if (!x.allFinite())
    throw SimulationError("simulation blew up at step " + std::to_string(k) + " on path " +
                          std::to_string(m));
}

}  // namespace detail

// Forward simulation started at node t_index with state x, consuming only the
// driver increments from t_index onward. Nodes before t_index are filled with
// the start state.
inline StatePaths restart_forward(const ProblemSpec& spec, const ControlLaw& law, int t_index,
                                  const Vec& x, const TimeGrid& grid,
                                  const BrownianDriver& driver) {
  if (t_index < 0 || t_index > grid.N)
    throw ConfigError("restart_forward: start index out of range");
  if (x.size() != spec.n) throw ConfigError("restart_forward: state dimension mismatch");
  if (t_index < grid.N) {
    const Vec u0 = law.value(0, t_index, grid.nodes[t_index], x, driver.level(0, t_index));
    if (u0.size() != law.control_dim())
      throw ConfigError("control law dimension mismatch");
    if (spec.b(grid.nodes[t_index], x, u0, 0.0).size() != spec.n ||
        spec.sigma(grid.nodes[t_index], x, u0, 0.0).size() != spec.n)
      throw ConfigError("drift and diffusion must return state-sized vectors");
  }
  StatePaths out;
  out.grid = grid;
  out.start_index = t_index;
  out.X = PathTensor(driver.M, grid.N + 1, spec.n);
  for (int m = 0; m < driver.M; ++m) {
    for (int k = 0; k <= t_index; ++k) out.X.at(m, k) = x;
    Vec state = x;
    for (int k = t_index; k < grid.N; ++k) {
      const double t = grid.nodes[k];
      const double w = driver.level(m, k);
      const Vec u = law.value(m, k, t, state, w);
      state += spec.b(t, state, u, w) * grid.dt + spec.sigma(t, state, u, w) * driver.dW(m, k);
      detail::check_finite(state, m, k + 1);
      out.X.at(m, k + 1) = state;
    }
  }
  return out;
}

inline StatePaths simulate_forward(const ProblemSpec& spec, const ControlLaw& law, const Vec& x0,
                                   const TimeGrid& grid, const BrownianDriver& driver) {
  return restart_forward(spec, law, 0, x0, grid, driver);
}

// First-variation (flow derivative) along already-simulated paths:
// the linear matrix SDE dJ = b_x J dt + sigma_x J dW, J_0 = I.
inline FlowPaths simulate_flow(const ProblemSpec& spec, const ControlLaw& law,
                               const StatePaths& states, const BrownianDriver& driver) {
  const TimeGrid& grid = states.grid;
  const int n = spec.n;
  FlowPaths out;
  out.grid = grid;
  out.dX = PathTensor(driver.M, grid.N + 1, n * n);
  const Mat eye = Mat::Identity(n, n);
  for (int m = 0; m < driver.M; ++m) {
    Mat J = eye;
    Eigen::Map<Mat>(out.dX.at(m, 0).data(), n, n) = J;
    for (int k = 0; k < grid.N; ++k) {
      const double t = grid.nodes[k];
      const double w = driver.level(m, k);
      const Vec x = states.X.at(m, k);
      const Vec u = law.value(m, k, t, x, w);
      J += spec.bx(t, x, u, w) * J * grid.dt + spec.sigmax(t, x, u, w) * J * driver.dW(m, k);
      if (!J.allFinite())
        throw SimulationError("flow simulation blew up at step " + std::to_string(k + 1) +
                              " on path " + std::to_string(m));
      Eigen::Map<Mat>(out.dX.at(m, k + 1).data(), n, n) = J;
    }
  }
  return out;
}

inline Mat flow_matrix(const FlowPaths& flow, int m, int k, int n) {
  return Eigen::Map<const Mat>(flow.dX.at(m, k).data(), n, n);
}

}  // namespace fbsde
