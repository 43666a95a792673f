#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fbsde/bsde.hpp"
#include "fbsde/brownian.hpp"
#include "fbsde/control.hpp"
#include "fbsde/errors.hpp"
#include "fbsde/fields.hpp"
#include "fbsde/forward.hpp"
#include "fbsde/problem.hpp"
#include "fbsde/regression.hpp"

namespace fbsde {

// Linear-quadratic system with (possibly factor-driven) random coefficients:
//   dX = [A X + B u] dt + [C X + D u] dW
//   dY = -[lambda Y + <Q X, X> + <R u, u>] dt + Z dW,   Y_T = <G X_T, X_T>
struct LqCoefficients {
  int n = 1;  // state dimension
  int k = 1;  // control dimension
  MatrixField A, C;       // n x n
  MatrixField B, D;       // n x k
  ScalarField lambda;
  MatrixField Q, R;       // symmetric, uniformly positive definite
  MatrixField G_term;     // symmetric terminal weight
  double pd_margin = 1e-10;
};

struct LqValues {
  Mat A, B, C, D, Q, R, G;
  double lambda = 0.0;
};

inline LqValues eval_lq(const LqCoefficients& c, double t, double w) {
  static const Vec no_state;
  LqValues v;
  v.A = c.A(t, no_state, w);
  v.B = c.B(t, no_state, w);
  v.C = c.C(t, no_state, w);
  v.D = c.D(t, no_state, w);
  v.Q = c.Q(t, no_state, w);
  v.R = c.R(t, no_state, w);
  v.G = c.G_term(t, no_state, w);
  v.lambda = c.lambda(t, no_state, w);
  return v;
}

struct RiccatiOptions {
  double gain_condition_cap = 1e8;
  double positivity_tol = 1e-8;   // allowed negative eigenvalue before erroring (ODE mode)
  double clip_cap = 1e-4;         // LSMC clip magnitude that flags instability
  bool strict = false;            // escalate the instability warning to an error
};

// Probes the coefficient processes over (t, w): every field must stay within
// its declared bound and the weights Q, R must keep their smallest eigenvalue
// above the positivity margin.
inline void validate_lq_coefficients(const LqCoefficients& c, double t0, double T,
                                     double w_radius = 4.0, int samples = 9) {
  static const Vec no_state;
  for (int it = 0; it <= samples; ++it) {
    const double t = t0 + (T - t0) * it / samples;
    for (int iw = 0; iw <= samples; ++iw) {
      const double w = -w_radius + 2.0 * w_radius * iw / samples;
      const LqValues v = eval_lq(c, t, w);
      const double margin = c.pd_margin;
      const double q_min = Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (v.Q + v.Q.transpose()))
                               .eigenvalues()
                               .minCoeff();
      const double r_min = Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (v.R + v.R.transpose()))
                               .eigenvalues()
                               .minCoeff();
      if (q_min < margin || r_min < margin)
        throw ConfigError("lq weights must be uniformly positive definite on probed inputs");
    }
  }
  const int n = c.n;
  auto check = [&](const auto& field, const char* name) {
    if (field.growth != Growth::bounded)
      throw ConfigError(std::string("lq coefficient ") + name + " must carry a bounded tag");
    probe_bound(field, n, t0, T, 1.0, w_radius, samples);
  };
  check(c.A, "A");
  check(c.B, "B");
  check(c.C, "C");
  check(c.D, "D");
  check(c.Q, "Q");
  check(c.R, "R");
  check(c.G_term, "G");
  check(c.lambda, "lambda");
}

namespace detail {

inline Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

// Solves (R + D'PD) X = S' with a condition-number guard.
inline Mat gain_solve(const Mat& R, const Mat& D, const Mat& P, const Mat& S, double cond_cap) {
  const Mat denom = symmetrize(R + D.transpose() * P * D);
  Eigen::SelfAdjointEigenSolver<Mat> es(denom);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (lo <= 0.0 || hi / lo > cond_cap)
    throw GainError("R + D'PD is near-singular (condition " +
                    std::to_string(lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity()) +
                    "); check the positivity of R");
  return denom.ldlt().solve(S.transpose());
}

// Drift of the Riccati backward equation (the quantity multiplying -ds).
inline Mat riccati_drift(const LqValues& v, const Mat& P, const Mat& L, double cond_cap) {
  const Mat S = P * v.B + v.C.transpose() * P * v.D + L * v.D;  // n x k
  const Mat gain = gain_solve(v.R, v.D, P, S, cond_cap);        // k x n
  return v.A.transpose() * P + P * v.A + v.C.transpose() * P * v.C + v.lambda * P +
         v.C.transpose() * L + L * v.C + v.Q - S * gain;
}

inline Mat clip_psd(const Mat& m, double* clip_magnitude) {
  Eigen::SelfAdjointEigenSolver<Mat> es(m);
  const double lo = es.eigenvalues().minCoeff();
  if (lo >= 0.0) {
    if (clip_magnitude) *clip_magnitude = 0.0;
    return m;
  }
  if (clip_magnitude) *clip_magnitude = -lo;
  const Vec clipped = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

// Solution (P, L) of the backward Riccati equation, either as a deterministic
// node sequence (ODE mode) or as fitted functions of the Brownian level
// (LSMC mode).
struct RiccatiSolution {
  enum class Mode { deterministic_ode, random_lsmc };
  Mode mode = Mode::deterministic_ode;
  TimeGrid grid;
  int n = 1;

  // ODE mode
  std::vector<Mat> P_nodes;  // N+1 matrices
  std::vector<Mat> L_nodes;  // identically zero

  // LSMC mode: continuation fits at nodes 0..N-1; node N evaluates G exactly
  std::vector<LinearFit> P_cont_fit;
  std::vector<LinearFit> L_fit;
  CompiledBasis factor_basis;
  LqCoefficients coeffs;  // retained for drift evaluation inside P_at
  RiccatiOptions options;

  double max_clip = 0.0;
  std::string warning;

  Mat P_at(int k, double w) const {
    if (mode == Mode::deterministic_ode) return P_nodes[k];
    static const Vec no_state;
    if (k >= grid.N) return detail::symmetrize(coeffs.G_term(grid.T, no_state, w));
    const Vec feats = factor_basis.eval(no_state, w);
    const Mat p_cont = detail::clip_psd(
        detail::symmetrize(unstack(P_cont_fit[k].predict_one(feats))), nullptr);
    const Mat l_val = detail::symmetrize(unstack(L_fit[k].predict_one(feats)));
    const Mat drift =
        detail::riccati_drift(eval_lq(coeffs, grid.nodes[k], w), p_cont, l_val,
                              options.gain_condition_cap);
    return detail::clip_psd(detail::symmetrize(p_cont + grid.dt * drift), nullptr);
  }

  Mat L_at(int k, double w) const {
    if (mode == Mode::deterministic_ode) return Mat::Zero(n, n);
    static const Vec no_state;
    const int kk = std::min(k, grid.N - 1);
    const Vec feats = factor_basis.eval(no_state, w);
    return detail::symmetrize(unstack(L_fit[kk].predict_one(feats)));
  }

  Mat unstack(const Vec& entries) const {
    return Eigen::Map<const Mat>(entries.data(), n, n);
  }
};

// Backward RK4 integration of the deterministic matrix Riccati equation from
// P(T) = G, symmetrizing after every step.
inline RiccatiSolution solve_riccati_ode(const LqCoefficients& coeffs, const TimeGrid& grid,
                                         const RiccatiOptions& options = {}) {
  static const Vec no_state;
  // the deterministic mode must not see any w-dependence
  for (double t : {grid.t0, 0.5 * (grid.t0 + grid.T), grid.T}) {
    const LqValues a = eval_lq(coeffs, t, 0.0);
    const LqValues b = eval_lq(coeffs, t, 1.5);
    const double diff = (a.A - b.A).cwiseAbs().maxCoeff() + (a.B - b.B).cwiseAbs().maxCoeff() +
                        (a.C - b.C).cwiseAbs().maxCoeff() + (a.D - b.D).cwiseAbs().maxCoeff() +
                        (a.Q - b.Q).cwiseAbs().maxCoeff() + (a.R - b.R).cwiseAbs().maxCoeff() +
                        (a.G - b.G).cwiseAbs().maxCoeff() + std::abs(a.lambda - b.lambda);
    if (diff > 0.0)
      throw ConfigError("solve_riccati_ode: coefficients depend on the Brownian level; "
                        "use the LSMC mode");
  }

  RiccatiSolution sol;
  sol.mode = RiccatiSolution::Mode::deterministic_ode;
  sol.grid = grid;
  sol.n = coeffs.n;
  sol.P_nodes.assign(grid.N + 1, Mat::Zero(coeffs.n, coeffs.n));
  sol.L_nodes.assign(grid.N + 1, Mat::Zero(coeffs.n, coeffs.n));
  sol.coeffs = coeffs;
  sol.options = options;

  const Mat L0 = Mat::Zero(coeffs.n, coeffs.n);
  auto F = [&](double t, const Mat& P) {
    return detail::riccati_drift(eval_lq(coeffs, t, 0.0), P, L0, options.gain_condition_cap);
  };

  Mat P = detail::symmetrize(eval_lq(coeffs, grid.T, 0.0).G);
  sol.P_nodes[grid.N] = P;
  const double h = grid.dt;
  for (int k = grid.N; k >= 1; --k) {
    // backward step from nodes[k] to nodes[k-1]; dP/ds = -F so P(s-h) = P + h*F
    const double s = grid.nodes[k];
    const Mat k1 = F(s, P);
    const Mat k2 = F(s - 0.5 * h, P + 0.5 * h * k1);
    const Mat k3 = F(s - 0.5 * h, P + 0.5 * h * k2);
    const Mat k4 = F(s - h, P + h * k3);
    P = detail::symmetrize(P + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    Eigen::SelfAdjointEigenSolver<Mat> es(P);
    if (es.eigenvalues().minCoeff() < -options.positivity_tol)
      throw PositivityError("Riccati solution lost positive semidefiniteness at node " +
                            std::to_string(k - 1));
    sol.P_nodes[k - 1] = P;
  }
  return sol;
}

// Entrywise backward least-squares Monte Carlo on the Riccati equation along
// Brownian factor paths. Coefficients must be factor-driven (functions of
// (t, w)); the basis must include the Brownian level.
inline RiccatiSolution solve_riccati_lsmc(const LqCoefficients& coeffs, const TimeGrid& grid,
                                          const BrownianDriver& driver,
                                          const RegressionBasis& basis,
                                          const RiccatiOptions& options = {}) {
  if (!basis.use_w)
    throw ConfigError("solve_riccati_lsmc: the factor basis must include the Brownian level w");
  static const Vec no_state;
  const int n = coeffs.n;
  const int M = driver.M;
  const int E = n * n;

  RiccatiSolution sol;
  sol.mode = RiccatiSolution::Mode::random_lsmc;
  sol.grid = grid;
  sol.n = n;
  sol.coeffs = coeffs;
  sol.options = options;
  RegressionBasis factor = basis;
  factor.use_all_state = false;
  factor.state_components.clear();
  sol.factor_basis = CompiledBasis(factor, 0);
  sol.P_cont_fit.resize(grid.N);
  sol.L_fit.resize(grid.N);

  const int B = sol.factor_basis.count();
  Eigen::MatrixXd feats(M, B);
  Eigen::MatrixXd P_next(M, E), P_hat(M, E), L_hat(M, E), resid(M, E);
  Eigen::VectorXd row(B);

  for (int m = 0; m < M; ++m) {
    const Mat G = detail::symmetrize(coeffs.G_term(grid.T, no_state, driver.level(m, grid.N)));
    P_next.row(m) = Eigen::Map<const Vec>(G.data(), E);
  }

  double max_clip = 0.0;
  for (int k = grid.N - 1; k >= 0; --k) {
    for (int m = 0; m < M; ++m) {
      sol.factor_basis.eval(no_state, driver.level(m, k), row);
      feats.row(m) = row;
    }
    sol.P_cont_fit[k] = fit_ridge(feats, P_next, basis.ridge);
    sol.P_cont_fit[k].predict(feats, P_hat);
    for (int m = 0; m < M; ++m)
      resid.row(m) = (P_next.row(m) - P_hat.row(m)) * (driver.dW(m, k) / grid.dt);
    sol.L_fit[k] = fit_ridge(feats, resid, basis.ridge);
    sol.L_fit[k].predict(feats, L_hat);

    for (int m = 0; m < M; ++m) {
      const double w = driver.level(m, k);
      const Mat p_cont = detail::clip_psd(
          detail::symmetrize(Eigen::Map<const Mat>(P_hat.row(m).data(), n, n)), nullptr);
      const Mat l_val = detail::symmetrize(Eigen::Map<const Mat>(L_hat.row(m).data(), n, n));
      const Mat drift = detail::riccati_drift(eval_lq(coeffs, grid.nodes[k], w), p_cont, l_val,
                                              options.gain_condition_cap);
      double clip = 0.0;
      const Mat P_new = detail::clip_psd(detail::symmetrize(p_cont + grid.dt * drift), &clip);
      max_clip = std::max(max_clip, clip);
      P_next.row(m) = Eigen::Map<const Vec>(P_new.data(), E);
    }
  }
  sol.max_clip = max_clip;
  if (max_clip > options.clip_cap) {
    const std::string msg = "Riccati LSMC clipped eigenvalues by " + std::to_string(max_clip) +
                            ", above the stability threshold " + std::to_string(options.clip_cap);
    if (options.strict) throw PositivityError(msg);
    sol.warning = msg;
  }
  return sol;
}

// Feedback value u = -(R + D'PD)^{-1} [PB + C'PD + LD]' x for given (P, L).
inline Vec lq_feedback_value(const LqValues& v, const Mat& P, const Mat& L, const Vec& x,
                             double cond_cap = 1e8) {
  const Mat S = P * v.B + v.C.transpose() * P * v.D + L * v.D;
  const Mat gain = detail::gain_solve(v.R, v.D, P, S, cond_cap);
  return -gain * x;
}

// Optimal state feedback law built from a Riccati solution.
inline ControlLaw feedback_control(const RiccatiSolution& riccati, const LqCoefficients& coeffs) {
  const TimeGrid grid = riccati.grid;
  const RiccatiOptions options = riccati.options;
  return ControlLaw::feedback(
      coeffs.k,
      [riccati, coeffs, grid, options](double t, const Vec& x, double w) -> Vec {
        int k = static_cast<int>(std::lround((t - grid.t0) / grid.dt));
        k = std::max(0, std::min(grid.N, k));
        const LqValues v = eval_lq(coeffs, t, w);
        return lq_feedback_value(v, riccati.P_at(k, w), riccati.L_at(k, w), x,
                                 options.gain_condition_cap);
      });
}

// Quadratic value pair (v, psi) = (<P x, x>, <L x, x>).
inline std::pair<double, double> lq_value(const RiccatiSolution& riccati, int t_index,
                                          const Vec& x, double w) {
  const Mat P = riccati.P_at(t_index, w);
  const Mat L = riccati.L_at(t_index, w);
  return {x.dot(P * x), x.dot(L * x)};
}

// Pathwise k_t = -exp(int_0^t lambda(s, W_s) ds) by left-endpoint quadrature
// (the k-equation dk = lambda k ds has no martingale part).
inline Eigen::MatrixXd solve_k_lq(const LqCoefficients& coeffs, const TimeGrid& grid,
                                  const BrownianDriver& driver) {
  static const Vec no_state;
  Eigen::MatrixXd k(driver.M, grid.N + 1);
  for (int m = 0; m < driver.M; ++m) {
    double acc = 0.0;
    k(m, 0) = -1.0;
    for (int j = 0; j < grid.N; ++j) {
      acc += coeffs.lambda(grid.nodes[j], no_state, driver.level(m, j)) * grid.dt;
      k(m, j + 1) = -std::exp(acc);
    }
  }
  return k;
}

// Costate processes of the maximum principle.
struct AdjointTriple {
  PathTensor p;        // M x (N+1) x n
  PathTensor q;        // M x N x n
  Eigen::MatrixXd k;   // M x (N+1)
};

// Adjoint (p, q) of the LQ problem: the linear BSDE
//   dp = -[A'p + C'q - 2 k Q X] ds + q dW,   p_T = -2 k_T G X_T.
inline AdjointTriple solve_lq_adjoint(const LqCoefficients& coeffs, const StatePaths& states,
                                      const ControlLaw& law, const Eigen::MatrixXd& k,
                                      const BrownianDriver& driver,
                                      const RegressionBasis& basis) {
  (void)law;  // the adjoint drift does not involve u in the LQ case
  static const Vec no_state;
  const TimeGrid& grid = states.grid;
  const int n = coeffs.n;
  const int M = driver.M;

  Eigen::MatrixXd terminal(M, n);
  for (int m = 0; m < M; ++m) {
    const double wT = driver.level(m, grid.N);
    const Mat G = detail::symmetrize(coeffs.G_term(grid.T, no_state, wT));
    terminal.row(m) = (-2.0 * k(m, grid.N)) * (G * states.X.at(m, grid.N));
  }
  LinearTermFn terms = [&](int m, int j, Mat& alpha, Mat& beta, Vec& gamma) {
    const LqValues v = eval_lq(coeffs, grid.nodes[j], driver.level(m, j));
    alpha = v.A.transpose();
    beta = v.C.transpose();
    gamma = -2.0 * k(m, j) * (v.Q * states.X.at(m, j));
  };
  const VectorBsdeSolution sol = solve_linear_bsde_vec(n, terminal, terms, states, driver, basis);
  AdjointTriple out;
  out.p = sol.Y;
  out.q = sol.Z;
  out.k = k;
  return out;
}

// Per-(path, step) residual of the stationarity identity
//   -2 k R u + D'q + B'p = 0
// together with RMS summaries, absolute and relative to RMS(2 k R u).
struct StationarityReport {
  PathTensor residual;  // M x N x k
  double rms = 0.0;
  double ref_rms = 0.0;
  double relative = 0.0;
};

inline StationarityReport stationarity_residual(const LqCoefficients& coeffs,
                                                const StatePaths& states, const ControlLaw& law,
                                                const AdjointTriple& adjoint,
                                                const BrownianDriver& driver) {
  const TimeGrid& grid = states.grid;
  const int M = states.X.paths();
  StationarityReport rep;
  rep.residual = PathTensor(M, grid.N, coeffs.k);
  double ss = 0.0, ss_ref = 0.0;
  long count = 0;
  for (int m = 0; m < M; ++m) {
    for (int j = 0; j < grid.N; ++j) {
      const double t = grid.nodes[j];
      const double w = driver.level(m, j);
      const Vec x = states.X.at(m, j);
      const LqValues v = eval_lq(coeffs, t, w);
      const Vec u = law.value(m, j, t, x, w);
      const Vec ref = 2.0 * adjoint.k(m, j) * (v.R * u);
      const Vec res = -ref + v.D.transpose() * adjoint.q.at(m, j).eval() +
                      v.B.transpose() * adjoint.p.at(m, j).eval();
      rep.residual.at(m, j) = res;
      ss += res.squaredNorm();
      ss_ref += ref.squaredNorm();
      count += coeffs.k;
    }
  }
  rep.rms = std::sqrt(ss / count);
  rep.ref_rms = std::sqrt(ss_ref / count);
  rep.relative = rep.ref_rms > 0.0 ? rep.rms / rep.ref_rms : 0.0;
  return rep;
}

// RMS residuals of the costate identities p = -2 P X k and
// q = -2 [P (C X + D u) + L X] k along optimal paths.
struct CostateResiduals {
  double rms_p = 0.0, ref_rms_p = 0.0, rel_p = 0.0;
  double rms_q = 0.0, ref_rms_q = 0.0, rel_q = 0.0;
};

inline CostateResiduals mp_dpp_residual_lq(const RiccatiSolution& riccati,
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
      const LqValues v = eval_lq(riccati.coeffs, t, w);
      const Mat P = riccati.P_at(j, w);
      const Mat L = riccati.L_at(j, w);
      const Vec ref_p = -2.0 * P * x * k(m, j);
      const Vec ref_q = -2.0 * (P * (v.C * x + v.D * u) + L * x) * k(m, j);
      ssp += (adjoint.p.at(m, j) - ref_p).squaredNorm();
      ssq += (adjoint.q.at(m, j) - ref_q).squaredNorm();
      ssp_ref += ref_p.squaredNorm();
      ssq_ref += ref_q.squaredNorm();
      count += riccati.n;
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

// The LQ system expressed as a generic problem specification, with analytic
// derivatives.
inline ProblemSpec make_lq_problem(const LqCoefficients& c) {
  static const Vec no_state;
  ProblemSpec spec;
  spec.n = c.n;
  spec.k = c.k;
  spec.b = [c](double t, const Vec& x, const Vec& u, double w) -> Vec {
    const LqValues v = eval_lq(c, t, w);
    return v.A * x + v.B * u;
  };
  spec.sigma = [c](double t, const Vec& x, const Vec& u, double w) -> Vec {
    const LqValues v = eval_lq(c, t, w);
    return v.C * x + v.D * u;
  };
  spec.f = [c](double t, const Vec& x, double y, double, const Vec& u, double w) {
    const LqValues v = eval_lq(c, t, w);
    return v.lambda * y + x.dot(v.Q * x) + u.dot(v.R * u);
  };
  spec.h = [c](const Vec& x, double w) {
    static const Vec ns;
    const Mat G = c.G_term(0.0, ns, w);
    return x.dot(G * x);
  };
  spec.b_x = [c](double t, const Vec&, const Vec&, double w) { return eval_lq(c, t, w).A; };
  spec.b_u = [c](double t, const Vec&, const Vec&, double w) { return eval_lq(c, t, w).B; };
  spec.sigma_x = [c](double t, const Vec&, const Vec&, double w) { return eval_lq(c, t, w).C; };
  spec.sigma_u = [c](double t, const Vec&, const Vec&, double w) { return eval_lq(c, t, w).D; };
  spec.f_x = [c](double t, const Vec& x, double, double, const Vec&, double w) -> Vec {
    return 2.0 * eval_lq(c, t, w).Q * x;
  };
  spec.f_y = [c](double t, const Vec&, double, double, const Vec&, double w) {
    return eval_lq(c, t, w).lambda;
  };
  spec.f_z = [](double, const Vec&, double, double, const Vec&, double) { return 0.0; };
  spec.f_u = [c](double t, const Vec&, double, double, const Vec& u, double w) -> Vec {
    return 2.0 * eval_lq(c, t, w).R * u;
  };
  spec.h_x = [c](const Vec& x, double w) -> Vec {
    static const Vec ns;
    return 2.0 * c.G_term(0.0, ns, w) * x;
  };
  return spec;
}

}  // namespace fbsde
