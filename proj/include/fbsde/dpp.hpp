#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "fbsde/bsde.hpp"
#include "fbsde/errors.hpp"
#include "fbsde/hamiltonian.hpp"
#include "fbsde/lq.hpp"

namespace fbsde {

// A candidate value field V(t_index, x, w) with its martingale integrand Psi
// and (optionally analytic) spatial derivatives. Missing derivatives use
// central finite differences with step fd_step * (1 + |x|).
struct ValueField {
  std::function<double(int t_index, const Vec& x, double w)> V, Psi;
  std::function<Vec(int t_index, const Vec& x, double w)> Vx_fn, Psix_fn;
  std::function<Mat(int t_index, const Vec& x, double w)> Vxx_fn;
  double fd_step = 1e-4;

  Vec Vx(int t, const Vec& x, double w) const {
    if (Vx_fn) return Vx_fn(t, x, w);
    return fd_grad([&](const Vec& xx) { return V(t, xx, w); }, x);
  }
  Vec Psix(int t, const Vec& x, double w) const {
    if (Psix_fn) return Psix_fn(t, x, w);
    return fd_grad([&](const Vec& xx) { return Psi(t, xx, w); }, x);
  }
  Mat Vxx(int t, const Vec& x, double w) const {
    if (Vxx_fn) return Vxx_fn(t, x, w);
    return fd_hess([&](const Vec& xx) { return V(t, xx, w); }, x);
  }

  // quadratic field (<P x, x>, <L x, x>) from a Riccati solution
  static ValueField from_lq(const RiccatiSolution& riccati) {
    ValueField f;
    f.V = [riccati](int t, const Vec& x, double w) { return x.dot(riccati.P_at(t, w) * x); };
    f.Psi = [riccati](int t, const Vec& x, double w) { return x.dot(riccati.L_at(t, w) * x); };
    f.Vx_fn = [riccati](int t, const Vec& x, double w) -> Vec {
      return 2.0 * riccati.P_at(t, w) * x;
    };
    f.Vxx_fn = [riccati](int t, const Vec&, double w) -> Mat {
      return 2.0 * riccati.P_at(t, w);
    };
    f.Psix_fn = [riccati](int t, const Vec& x, double w) -> Vec {
      return 2.0 * riccati.L_at(t, w) * x;
    };
    return f;
  }

 private:
  template <class Fn>
  Vec fd_grad(const Fn& fn, const Vec& x) const {
    Vec g(x.size());
    Vec xp = x, xm = x;
    for (int i = 0; i < x.size(); ++i) {
      const double h = fd_step * (1.0 + std::abs(x[i]));
      xp[i] = x[i] + h;
      xm[i] = x[i] - h;
      g[i] = (fn(xp) - fn(xm)) / (2.0 * h);
      xp[i] = x[i];
      xm[i] = x[i];
    }
    return g;
  }
  template <class Fn>
  Mat fd_hess(const Fn& fn, const Vec& x) const {
    const int n = static_cast<int>(x.size());
    Mat H(n, n);
    const double f0 = fn(x);
    Vec xx = x;
    std::vector<double> h(n);
    for (int i = 0; i < n; ++i) h[i] = fd_step * (1.0 + std::abs(x[i]));
    for (int i = 0; i < n; ++i) {
      xx[i] = x[i] + h[i];
      const double fp = fn(xx);
      xx[i] = x[i] - h[i];
      const double fm = fn(xx);
      xx[i] = x[i];
      H(i, i) = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
      for (int j = i + 1; j < n; ++j) {
        xx[i] = x[i] + h[i];
        xx[j] = x[j] + h[j];
        const double fpp = fn(xx);
        xx[j] = x[j] - h[j];
        const double fpm = fn(xx);
        xx[i] = x[i] - h[i];
        const double fmm = fn(xx);
        xx[j] = x[j] + h[j];
        const double fmp = fn(xx);
        xx[i] = x[i];
        xx[j] = x[j];
        H(i, j) = H(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
      }
    }
    return H;
  }
};

inline HamiltonianInputs hjb_inputs(const ValueField& field, int t_index, double t, const Vec& x,
                                    double w, const Vec& u) {
  HamiltonianInputs in;
  in.t = t;
  in.x = x;
  in.y = field.V(t_index, x, w);
  in.z = field.Psi(t_index, x, w);
  in.p = field.Vx(t_index, x, w);
  in.q = field.Psix(t_index, x, w);
  in.A = field.Vxx(t_index, x, w);
  in.u = u;
  return in;
}

// Delta(t, x, u) = Gamma_hat - G(..., u), where Gamma_hat is the minimum of
// the generalized Hamiltonian over the supplied control grid. By construction
// Delta <= 0 on every grid point and Delta = 0 at the grid minimizer.
inline double delta_function(const ValueField& field, const ProblemSpec& spec,
                             const TimeGrid& grid, int t_index, const Vec& x, double w,
                             const Vec& u, const std::vector<Vec>& control_grid) {
  if (control_grid.empty()) throw ConfigError("delta_function: empty control grid");
  const double t = grid.nodes[t_index];
  double gamma_hat = std::numeric_limits<double>::infinity();
  for (const Vec& ug : control_grid) {
    HamiltonianInputs in = hjb_inputs(field, t_index, t, x, w, ug);
    gamma_hat = std::min(gamma_hat, generalized_hamiltonian(in, spec, w));
  }
  HamiltonianInputs in = hjb_inputs(field, t_index, t, x, w, u);
  return gamma_hat - generalized_hamiltonian(in, spec, w);
}

// Residual of the dynamic programming identity
//   G_{t, t+delta}(V(t+delta, X_{t+delta})) - V(t, x)
// under the supplied law; near zero for an optimal law, and nonnegative (up
// to Monte Carlo noise) for any law.
inline CostEstimate dpp_residual(const ValueField& field, const ProblemSpec& spec,
                                 const ControlLaw& law, int t_index, int delta_steps,
                                 const Vec& x, const TimeGrid& grid,
                                 const BrownianDriver& driver, const RegressionBasis& basis) {
  if (t_index < 0 || delta_steps < 0 || t_index + delta_steps > grid.N)
    throw ConfigError("dpp_residual: window out of range");
  const StatePaths states = restart_forward(spec, law, t_index, x, grid, driver);
  const int M = driver.M;
  const int k_end = t_index + delta_steps;
  Eigen::MatrixXd terminal(M, 1);
  for (int m = 0; m < M; ++m)
    terminal(m, 0) = field.V(k_end, states.X.at(m, k_end), driver.level(m, k_end));
  auto drift = [&](int k, int m, const Vec& yhat, const Vec& z) -> Vec {
    const double t = grid.nodes[k];
    const double w = driver.level(m, k);
    const Vec xv = states.X.at(m, k);
    const Vec u = law.value(m, k, t, xv, w);
    Vec o(1);
    o[0] = spec.f(t, xv, yhat[0], z[0], u, w);
    return o;
  };
  Eigen::MatrixXd pathwise;
  detail::solve_backward_window(states, driver, basis, spec.n, t_index, k_end, terminal, drift,
                                &pathwise);
  Eigen::VectorXd residual(M);
  for (int m = 0; m < M; ++m) {
    const double v_start = field.V(t_index, x, driver.level(m, t_index));
    residual[m] = pathwise(m, 0) - v_start;
  }
  const auto [mean, se] = mc_mean_stderr(residual, driver.antithetic);
  return {mean, se};
}

// Residuals of the costate relations expressed through a value field:
//   p + V_x(t, X) k  and  q + [V_xx sigma + V_x f_z(t, X, V, sigma'V_x + Psi, u) + Psi_x] k.
inline CostateResiduals mp_dpp_relation_general(const ValueField& field, const ProblemSpec& spec,
                                                const StatePaths& states, const ControlLaw& law,
                                                const AdjointTriple& adjoint,
                                                const Eigen::MatrixXd& k,
                                                const BrownianDriver& driver) {
  const TimeGrid& grid = states.grid;
  const int M = states.X.paths();
  CostateResiduals out;
  double ssp = 0.0, ssp_ref = 0.0, ssq = 0.0, ssq_ref = 0.0;
  long count = 0;
  for (int m = 0; m < M; ++m) {
    for (int j = 0; j < grid.N; ++j) {
      const double t = grid.nodes[j];
      const double w = driver.level(m, j);
      const Vec x = states.X.at(m, j);
      const Vec u = law.value(m, j, t, x, w);
      const Vec sigma = spec.sigma(t, x, u, w);
      const double v = field.V(j, x, w);
      const double psi = field.Psi(j, x, w);
      const Vec vx = field.Vx(j, x, w);
      const Mat vxx = field.Vxx(j, x, w);
      const Vec psix = field.Psix(j, x, w);
      const double fz = spec.fz(t, x, v, sigma.dot(vx) + psi, u, w);
      const Vec ref_p = -vx * k(m, j);
      const Vec ref_q = -(vxx * sigma + vx * fz + psix) * k(m, j);
      ssp += (adjoint.p.at(m, j) - ref_p).squaredNorm();
      ssq += (adjoint.q.at(m, j) - ref_q).squaredNorm();
      ssp_ref += ref_p.squaredNorm();
      ssq_ref += ref_q.squaredNorm();
      count += spec.n;
    }
  }
  out.rms_p = std::sqrt(ssp / count);
  out.rms_q = std::sqrt(ssq / count);
  out.ref_rms_p = std::sqrt(ssp_ref / count);
  out.ref_rms_q = std::sqrt(ssq_ref / count);
  out.rel_p = out.ref_rms_p > 0.0 ? out.rms_p / out.ref_rms_p : 0.0;
  out.rel_q = out.ref_rms_q > 0.0 ? out.rms_q / out.ref_rms_q : 0.0;
  return out;
}

// Upper bound on the value by exhaustive minimization over piecewise-constant
// open-loop controls: macro_steps blocks, each constant at one of the grid
// values. Ties break toward the lexicographically smallest sequence.
inline double exhaustive_value(const ProblemSpec& spec, int t_index, const Vec& x,
                               const std::vector<Vec>& control_grid, int macro_steps,
                               const TimeGrid& grid, const BrownianDriver& driver,
                               const RegressionBasis& basis, long combination_cap = 10000) {
  if (control_grid.empty()) throw ConfigError("exhaustive_value: empty control grid");
  if (macro_steps < 1) throw ConfigError("exhaustive_value: need at least one macro step");
  double combos = 1.0;
  for (int i = 0; i < macro_steps; ++i) {
    combos *= static_cast<double>(control_grid.size());
    if (combos > static_cast<double>(combination_cap))
      throw ConfigError("exhaustive_value: combination count exceeds the configured cap");
  }

  const int steps_total = grid.N - t_index;
  auto block_of = [&](int step) {
    // step counted from t_index; blocks as equal as integer division allows
    const int rel = step - t_index;
    return std::min(macro_steps - 1, rel * macro_steps / steps_total);
  };

  std::vector<int> choice(macro_steps, 0);
  double best = std::numeric_limits<double>::infinity();
  bool more = true;
  while (more) {
    ControlLaw law = ControlLaw::feedback(
        spec.k, [&, choice](double t, const Vec&, double) -> Vec {
          int step = static_cast<int>(std::lround((t - grid.t0) / grid.dt));
          step = std::max(t_index, std::min(grid.N - 1, step));
          return control_grid[choice[block_of(step)]];
        });
    const StatePaths states = restart_forward(spec, law, t_index, x, grid, driver);
    Eigen::MatrixXd terminal(driver.M, 1);
    for (int m = 0; m < driver.M; ++m)
      terminal(m, 0) = spec.h(states.X.at(m, grid.N), driver.level(m, grid.N));
    auto drift = [&](int k, int m, const Vec& yhat, const Vec& z) -> Vec {
      const double t = grid.nodes[k];
      const double w = driver.level(m, k);
      const Vec xv = states.X.at(m, k);
      const Vec u = law.value(m, k, t, xv, w);
      Vec o(1);
      o[0] = spec.f(t, xv, yhat[0], z[0], u, w);
      return o;
    };
    const VectorBsdeSolution sol = detail::solve_backward_window(
        states, driver, basis, spec.n, t_index, grid.N, terminal, drift);
    double value = 0.0;
    for (int m = 0; m < driver.M; ++m) value += sol.Y.scalar(m, t_index);
    value /= driver.M;
    if (value < best) best = value;  // strict '<' keeps the lexicographically first optimum

    // odometer over choices, last block fastest, so enumeration is lexicographic
    int pos = macro_steps - 1;
    while (pos >= 0 && ++choice[pos] == static_cast<int>(control_grid.size())) {
      choice[pos] = 0;
      --pos;
    }
    more = pos >= 0;
  }
  return best;
}

}  // namespace fbsde
