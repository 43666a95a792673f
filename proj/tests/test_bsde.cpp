#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fbsde/bsde.hpp"
#include "fbsde/forward.hpp"

using namespace fbsde;

namespace {

Vec x0_of(double v) {
  Vec x(1);
  x << v;
  return x;
}

const ControlLaw no_control = ControlLaw::constant(Eigen::VectorXd::Zero(1));

ProblemSpec base_problem() {
  ProblemSpec spec;
  spec.n = 1;
  spec.k = 1;
  spec.b = [](double, const Vec&, const Vec&, double) -> Vec { return Vec::Zero(1); };
  spec.sigma = [](double, const Vec&, const Vec&, double) -> Vec { return Vec::Zero(1); };
  spec.f = [](double, const Vec&, double, double, const Vec&, double) { return 0.0; };
  spec.h = [](const Vec&, double) { return 0.0; };
  return spec;
}

RegressionBasis state_basis(int degree = 2) {
  RegressionBasis b;
  b.degree = degree;
  b.use_w = false;
  return b;
}

}  // namespace

TEST_CASE("a constant terminal with no driver is a constant solution") {
  ProblemSpec spec = base_problem();
  spec.h = [](const Vec&, double) { return 3.5; };
  const TimeGrid g = build_grid(0.0, 1.0, 20);
  const BrownianDriver d = sample_brownian(g, 64, 21);
  const StatePaths s = simulate_forward(spec, no_control, x0_of(1.0), g, d);
  const BsdeSolution sol = solve_bsde(spec, s, no_control, d, state_basis());
  CHECK((sol.Y.array() - 3.5).abs().maxCoeff() < 1e-12);
  CHECK(sol.Z.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("terminal column equals the terminal map bit-exactly") {
  ProblemSpec spec = base_problem();
  spec.sigma = [](double, const Vec&, const Vec&, double) -> Vec { return Vec::Ones(1); };
  spec.h = [](const Vec& x, double) { return std::sin(3.0 * x[0]) + x[0] * x[0]; };
  const TimeGrid g = build_grid(0.0, 1.0, 10);
  const BrownianDriver d = sample_brownian(g, 32, 22);
  const StatePaths s = simulate_forward(spec, no_control, x0_of(0.3), g, d);
  const BsdeSolution sol = solve_bsde(spec, s, no_control, d, state_basis());
  for (int m = 0; m < d.M; ++m)
    CHECK(sol.Y(m, g.N) == spec.h(s.X.at(m, g.N), d.W(m, g.N)));
}

TEST_CASE("martingale representation of the driver level") {
  // X = W; Y_t = E[W_T | F_t] = W_t and Z = 1
  ProblemSpec spec = base_problem();
  spec.sigma = [](double, const Vec&, const Vec&, double) -> Vec { return Vec::Ones(1); };
  spec.h = [](const Vec& x, double) { return x[0]; };
  const TimeGrid g = build_grid(0.0, 1.0, 50);
  const BrownianDriver d = sample_brownian(g, 10000, 23);
  const StatePaths s = simulate_forward(spec, no_control, x0_of(0.0), g, d);
  const BsdeSolution sol = solve_bsde(spec, s, no_control, d, state_basis());
  double ss_y = 0.0, ss_z = 0.0;
  for (int m = 0; m < d.M; ++m) {
    for (int k = 0; k <= g.N; ++k) {
      const double e = sol.Y(m, k) - d.W(m, k);
      ss_y += e * e;
    }
    for (int k = 0; k < g.N; ++k) {
      const double e = sol.Z(m, k) - 1.0;
      ss_z += e * e;
    }
  }
  CHECK(std::sqrt(ss_y / (d.M * (g.N + 1))) < 0.02);
  CHECK(std::sqrt(ss_z / (d.M * g.N)) < 0.15);
}

TEST_CASE("state and level features may collide only with ridge") {
  // X == W makes the x and w columns identical
  ProblemSpec spec = base_problem();
  spec.sigma = [](double, const Vec&, const Vec&, double) -> Vec { return Vec::Ones(1); };
  spec.h = [](const Vec& x, double) { return x[0]; };
  const TimeGrid g = build_grid(0.0, 1.0, 8);
  const BrownianDriver d = sample_brownian(g, 256, 24);
  const StatePaths s = simulate_forward(spec, no_control, x0_of(0.0), g, d);
  RegressionBasis collide;
  collide.degree = 1;
  collide.use_w = true;
  collide.ridge = 0.0;
  CHECK_THROWS_AS(solve_bsde(spec, s, no_control, d, collide), RegressionError);
  collide.ridge = 1e-8;
  CHECK_NOTHROW(solve_bsde(spec, s, no_control, d, collide));
}

TEST_CASE("a linear driver compounds like the exponential") {
  const double r = 0.5;
  ProblemSpec spec = base_problem();
  spec.f = [r](double, const Vec&, double y, double, const Vec&, double) { return r * y; };
  spec.h = [](const Vec&, double) { return 1.0; };
  const TimeGrid g = build_grid(0.0, 1.0, 100);
  const BrownianDriver d = sample_brownian(g, 32, 25);
  const StatePaths s = simulate_forward(spec, no_control, x0_of(0.0), g, d);
  const BsdeSolution sol = solve_bsde(spec, s, no_control, d, state_basis());
  CHECK(std::abs(sol.Y(0, 0) - std::exp(r)) < 5e-3);
  CHECK(std::abs(sol.Y(0, 50) - std::exp(r * 0.5)) < 5e-3);
}

TEST_CASE("cost of the zero problem is exactly zero") {
  const ProblemSpec spec = base_problem();
  const TimeGrid g = build_grid(0.0, 1.0, 10);
  const BrownianDriver d = sample_brownian(g, 64, 26);
  const CostEstimate j = cost_functional(spec, no_control, x0_of(1.0), g, d, state_basis());
  CHECK(j.value == 0.0);
  CHECK(j.std_error == 0.0);
}

TEST_CASE("empty-window semigroup returns the mean of eta") {
  const ProblemSpec spec = base_problem();
  const TimeGrid g = build_grid(0.0, 1.0, 10);
  const BrownianDriver d = sample_brownian(g, 8, 27);
  Eigen::VectorXd eta(8);
  eta << 1, 2, 3, 4, 5, 6, 7, 8;
  const CostEstimate v =
      backward_semigroup(spec, no_control, 4, 0, x0_of(0.0), eta, g, d, state_basis());
  CHECK(v.value == Catch::Approx(4.5));
}

TEST_CASE("semigroup chains the full-horizon solution") {
  ProblemSpec spec = base_problem();
  spec.b = [](double, const Vec& x, const Vec&, double) -> Vec { return 0.1 * x; };
  spec.sigma = [](double, const Vec& x, const Vec&, double) -> Vec { return 0.2 * x; };
  spec.f = [](double, const Vec&, double y, double z, const Vec&, double) {
    return 0.3 * y + 0.1 * z;
  };
  spec.h = [](const Vec& x, double) { return x[0] * x[0]; };
  const TimeGrid g = build_grid(0.0, 1.0, 40);
  const BrownianDriver d = sample_brownian(g, 20000, 28);
  const StatePaths s = simulate_forward(spec, no_control, x0_of(1.0), g, d);
  const BsdeSolution full = solve_bsde(spec, s, no_control, d, state_basis());

  const int delta = 10;  // a quarter of the horizon
  Eigen::VectorXd eta(d.M);
  for (int m = 0; m < d.M; ++m) eta[m] = full.Y(m, delta);
  const CostEstimate chained =
      backward_semigroup(spec, no_control, 0, delta, x0_of(1.0), eta, g, d, state_basis());
  const double full_y0 = full.Y.col(0).mean();
  CHECK(std::abs(chained.value - full_y0) < 0.01 * std::abs(full_y0) + 3.0 * chained.std_error);
}

TEST_CASE("a driverless semigroup is a conditional expectation") {
  ProblemSpec spec = base_problem();
  spec.sigma = [](double, const Vec&, const Vec&, double) -> Vec { return Vec::Ones(1); };
  const TimeGrid g = build_grid(0.0, 1.0, 20);
  const BrownianDriver d = sample_brownian(g, 20000, 29);
  // eta = W_{t+delta}^2 at node 10; E[eta | F_0] = t + delta
  Eigen::VectorXd eta(d.M);
  for (int m = 0; m < d.M; ++m) eta[m] = d.W(m, 10) * d.W(m, 10);
  const CostEstimate v =
      backward_semigroup(spec, no_control, 0, 10, x0_of(0.0), eta, g, d, state_basis());
  const double expect = g.nodes[10];
  CHECK(std::abs(v.value - expect) < 3.0 * v.std_error + 5e-3);
}

TEST_CASE("linear bsde with zero coefficients keeps the terminal") {
  const ProblemSpec spec = base_problem();
  const TimeGrid g = build_grid(0.0, 1.0, 16);
  const BrownianDriver d = sample_brownian(g, 32, 30);
  const StatePaths s = simulate_forward(spec, no_control, x0_of(1.0), g, d);
  const Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(d.M, g.N);
  const Eigen::VectorXd terminal = Eigen::VectorXd::Constant(d.M, 2.25);
  const BsdeSolution sol =
      solve_linear_bsde(terminal, zeros, zeros, zeros, s, d, state_basis());
  CHECK((sol.Y.array() - 2.25).abs().maxCoeff() < 1e-12);
}

TEST_CASE("linear bsde alpha term compounds the exponential") {
  const double r = 0.4;
  const ProblemSpec spec = base_problem();
  const TimeGrid g = build_grid(0.0, 1.0, 100);
  const BrownianDriver d = sample_brownian(g, 32, 31);
  const StatePaths s = simulate_forward(spec, no_control, x0_of(1.0), g, d);
  const Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(d.M, g.N);
  const Eigen::MatrixXd alpha = Eigen::MatrixXd::Constant(d.M, g.N, r);
  const Eigen::VectorXd terminal = Eigen::VectorXd::Ones(d.M);
  const BsdeSolution sol =
      solve_linear_bsde(terminal, alpha, zeros, zeros, s, d, state_basis());
  CHECK(std::abs(sol.Y(0, 0) - std::exp(r)) < 4e-3);
}

TEST_CASE("linear bsde constant source integrates time to go") {
  const ProblemSpec spec = base_problem();
  const TimeGrid g = build_grid(0.0, 1.0, 64);
  const BrownianDriver d = sample_brownian(g, 32, 32);
  const StatePaths s = simulate_forward(spec, no_control, x0_of(1.0), g, d);
  const Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(d.M, g.N);
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Constant(d.M, g.N, 1.0);
  const Eigen::VectorXd terminal = Eigen::VectorXd::Zero(d.M);
  const BsdeSolution sol = solve_linear_bsde(terminal, zeros, zeros, ones, s, d, state_basis());
  for (int k = 0; k <= g.N; k += 8)
    CHECK(sol.Y(0, k) == Catch::Approx(g.T - g.nodes[k]).margin(1e-12));
}

TEST_CASE("a pointwise larger driver yields a larger value") {
  ProblemSpec lo = base_problem();
  lo.b = [](double, const Vec& x, const Vec&, double) -> Vec { return 0.1 * x; };
  lo.sigma = [](double, const Vec& x, const Vec&, double) -> Vec { return 0.2 * x; };
  lo.h = [](const Vec& x, double) { return x[0] * x[0]; };
  ProblemSpec hi = lo;
  hi.f = [](double, const Vec& x, double, double, const Vec&, double) {
    return 0.05 + 0.02 * std::sin(x[0]) * std::sin(x[0]);
  };
  const TimeGrid g = build_grid(0.0, 1.0, 50);
  const BrownianDriver d = sample_brownian(g, 10000, 33);
  const CostEstimate jlo = cost_functional(lo, no_control, x0_of(1.0), g, d, state_basis());
  const CostEstimate jhi = cost_functional(hi, no_control, x0_of(1.0), g, d, state_basis());
  CHECK(jlo.value <= jhi.value + 3.0 * (jlo.std_error + jhi.std_error));
}

TEST_CASE("representation error does not grow with basis degree") {
  ProblemSpec spec = base_problem();
  spec.sigma = [](double, const Vec&, const Vec&, double) -> Vec { return Vec::Ones(1); };
  spec.h = [](const Vec& x, double) { return x[0]; };
  const TimeGrid g = build_grid(0.0, 1.0, 50);
  const BrownianDriver d = sample_brownian(g, 10000, 34);
  const StatePaths s = simulate_forward(spec, no_control, x0_of(0.0), g, d);
  std::vector<double> rms;
  for (int degree : {1, 2, 3}) {
    const BsdeSolution sol = solve_bsde(spec, s, no_control, d, state_basis(degree));
    double ss = 0.0;
    for (int m = 0; m < d.M; ++m)
      for (int k = 0; k <= g.N; ++k) {
        const double e = sol.Y(m, k) - d.W(m, k);
        ss += e * e;
      }
    rms.push_back(std::sqrt(ss / (d.M * (g.N + 1))));
  }
  // the target is linear, so richer bases add only estimation noise
  CHECK(rms[1] < rms[0] * 2.0 + 1e-3);
  CHECK(rms[2] < rms[0] * 2.0 + 1e-3);

  // more paths shrink the error
  const BrownianDriver small = sample_brownian(g, 1000, 34);
  const StatePaths s_small = simulate_forward(spec, no_control, x0_of(0.0), g, small);
  const BsdeSolution sol_small = solve_bsde(spec, s_small, no_control, small, state_basis(2));
  double ss_small = 0.0;
  for (int m = 0; m < small.M; ++m)
    for (int k = 0; k <= g.N; ++k) {
      const double e = sol_small.Y(m, k) - small.W(m, k);
      ss_small += e * e;
    }
  const double rms_small = std::sqrt(ss_small / (small.M * (g.N + 1)));
  CHECK(rms[1] < rms_small);
}

TEST_CASE("an empty horizon returns the terminal map exactly") {
  ProblemSpec spec = base_problem();
  spec.h = [](const Vec& x, double) { return 3.0 * x[0] + 1.0; };
  const TimeGrid g = build_grid(0.0, 1.0, 5);
  const BrownianDriver d = sample_brownian(g, 16, 35);
  const StatePaths s = restart_forward(spec, no_control, g.N, x0_of(2.0), g, d);
  Eigen::MatrixXd terminal(d.M, 1);
  for (int m = 0; m < d.M; ++m) terminal(m, 0) = spec.h(s.X.at(m, g.N), d.W(m, g.N));
  auto drift = [](int, int, const Vec&, const Vec&) { return Vec::Zero(1); };
  const VectorBsdeSolution sol = detail::solve_backward_window(
      s, d, state_basis(), spec.n, g.N, g.N, terminal, drift);
  for (int m = 0; m < d.M; ++m) CHECK(sol.Y.scalar(m, g.N) == 7.0);
}
