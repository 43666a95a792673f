#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fbsde/brownian.hpp"
#include "fbsde/forward.hpp"
#include "fbsde/problem.hpp"

using namespace fbsde;

namespace {

ProblemSpec gbm_problem(double mu, double sigma) {
  ProblemSpec spec;
  spec.n = 1;
  spec.k = 1;
  spec.b = [mu](double, const Vec& x, const Vec&, double) -> Vec { return mu * x; };
  spec.sigma = [sigma](double, const Vec& x, const Vec&, double) -> Vec { return sigma * x; };
  spec.f = [](double, const Vec&, double, double, const Vec&, double) { return 0.0; };
  spec.h = [](const Vec& x, double) { return x[0]; };
  spec.b_x = [mu](double, const Vec&, const Vec&, double) -> Mat {
    return mu * Mat::Identity(1, 1);
  };
  spec.sigma_x = [sigma](double, const Vec&, const Vec&, double) -> Mat {
    return sigma * Mat::Identity(1, 1);
  };
  return spec;
}

ProblemSpec zero_problem() { return gbm_problem(0.0, 0.0); }

const ControlLaw no_control = ControlLaw::constant(Eigen::VectorXd::Zero(1));

Vec x0_of(double v) {
  Vec x(1);
  x << v;
  return x;
}

}  // namespace

TEST_CASE("constant dynamics stay constant") {
  const TimeGrid g = build_grid(0.0, 1.0, 16);
  const BrownianDriver d = sample_brownian(g, 8, 1);
  const StatePaths s = simulate_forward(zero_problem(), no_control, x0_of(1.0), g, d);
  for (int m = 0; m < d.M; ++m)
    for (int k = 0; k <= g.N; ++k) CHECK(s.X.scalar(m, k) == 1.0);
}

TEST_CASE("unit additive diffusion reproduces the driver exactly") {
  ProblemSpec spec = zero_problem();
  spec.sigma = [](double, const Vec&, const Vec&, double) -> Vec {
    return Vec::Ones(1);
  };
  const TimeGrid g = build_grid(0.0, 1.0, 32);
  const BrownianDriver d = sample_brownian(g, 10, 2);
  const StatePaths s = simulate_forward(spec, no_control, x0_of(0.0), g, d);
  for (int m = 0; m < d.M; ++m)
    for (int k = 0; k <= g.N; ++k) CHECK(s.X.scalar(m, k) == d.W(m, k));
}

TEST_CASE("geometric dynamics match the closed-form mean") {
  const ProblemSpec spec = gbm_problem(0.1, 0.2);
  const TimeGrid g = build_grid(0.0, 1.0, 200);
  const int M = 20000;
  const BrownianDriver d = sample_brownian(g, M, 3);
  const StatePaths s = simulate_forward(spec, no_control, x0_of(1.0), g, d);
  Eigen::VectorXd xT(M);
  for (int m = 0; m < M; ++m) xT[m] = s.X.scalar(m, g.N);
  const auto [mean, se] = mc_mean_stderr(xT, d.antithetic);
  CHECK(std::abs(mean - std::exp(0.1)) < 3.0 * se + 2e-3);  // small Euler bias allowance
}

TEST_CASE("flow of constant dynamics is the identity") {
  const TimeGrid g = build_grid(0.0, 1.0, 16);
  const BrownianDriver d = sample_brownian(g, 6, 4);
  const StatePaths s = simulate_forward(zero_problem(), no_control, x0_of(1.0), g, d);
  const FlowPaths f = simulate_flow(zero_problem(), no_control, s, d);
  for (int m = 0; m < d.M; ++m)
    for (int k = 0; k <= g.N; ++k) CHECK(f.dX.scalar(m, k) == 1.0);
}

TEST_CASE("flow of a linear drift matches the exponential") {
  const double a = 0.7;
  const ProblemSpec spec = gbm_problem(a, 0.0);
  const TimeGrid g = build_grid(0.0, 1.0, 400);
  const BrownianDriver d = sample_brownian(g, 2, 5);
  const StatePaths s = simulate_forward(spec, no_control, x0_of(1.0), g, d);
  const FlowPaths f = simulate_flow(spec, no_control, s, d);
  for (int k = 0; k <= g.N; k += 40) {
    const double exact = std::exp(a * g.nodes[k]);
    CHECK(std::abs(f.dX.scalar(0, k) - exact) < 5.0 * a * a * g.dt * exact);
  }
}

TEST_CASE("geometric flow equals the state ratio pathwise") {
  const ProblemSpec spec = gbm_problem(0.1, 0.2);
  const TimeGrid g = build_grid(0.0, 1.0, 100);
  const BrownianDriver d = sample_brownian(g, 16, 6);
  const StatePaths s = simulate_forward(spec, no_control, x0_of(2.0), g, d);
  const FlowPaths f = simulate_flow(spec, no_control, s, d);
  for (int m = 0; m < d.M; ++m)
    for (int k = 0; k <= g.N; k += 10)
      CHECK(f.dX.scalar(m, k) == Catch::Approx(s.X.scalar(m, k) / 2.0).margin(1e-12));
}

TEST_CASE("flow derivatives fall back to finite differences") {
  ProblemSpec spec = gbm_problem(0.3, 0.1);
  spec.b_x = nullptr;
  spec.sigma_x = nullptr;
  const TimeGrid g = build_grid(0.0, 1.0, 50);
  const BrownianDriver d = sample_brownian(g, 4, 7);
  const StatePaths s = simulate_forward(spec, no_control, x0_of(1.0), g, d);
  const FlowPaths f = simulate_flow(spec, no_control, s, d);
  CHECK(std::isfinite(f.dX.scalar(0, g.N)));

  spec.allow_fd = false;
  CHECK_THROWS_AS(simulate_flow(spec, no_control, s, d), ConfigError);
}

TEST_CASE("restart at zero reproduces the full simulation") {
  const ProblemSpec spec = gbm_problem(0.1, 0.2);
  const TimeGrid g = build_grid(0.0, 1.0, 20);
  const BrownianDriver d = sample_brownian(g, 6, 8);
  const StatePaths a = simulate_forward(spec, no_control, x0_of(1.0), g, d);
  const StatePaths b = restart_forward(spec, no_control, 0, x0_of(1.0), g, d);
  for (int m = 0; m < d.M; ++m)
    for (int k = 0; k <= g.N; ++k) CHECK(a.X.scalar(m, k) == b.X.scalar(m, k));
}

TEST_CASE("restart at the horizon is constant") {
  const ProblemSpec spec = gbm_problem(0.1, 0.2);
  const TimeGrid g = build_grid(0.0, 1.0, 20);
  const BrownianDriver d = sample_brownian(g, 6, 9);
  const StatePaths s = restart_forward(spec, no_control, g.N, x0_of(3.0), g, d);
  for (int m = 0; m < d.M; ++m)
    for (int k = 0; k <= g.N; ++k) CHECK(s.X.scalar(m, k) == 3.0);
}

TEST_CASE("restarting from a visited state replays the tail bit-exactly") {
  const ProblemSpec spec = gbm_problem(0.1, 0.2);
  const TimeGrid g = build_grid(0.0, 1.0, 20);
  const BrownianDriver d = sample_brownian(g, 6, 10);
  const StatePaths full = simulate_forward(spec, no_control, x0_of(1.0), g, d);
  const int mid = 7;
  for (int m = 0; m < d.M; ++m) {
    const StatePaths tail =
        restart_forward(spec, no_control, mid, full.X.at(m, mid), g, d);
    for (int k = mid; k <= g.N; ++k) CHECK(tail.X.scalar(m, k) == full.X.scalar(m, k));
  }
}

TEST_CASE("restart index is validated") {
  const ProblemSpec spec = gbm_problem(0.0, 0.0);
  const TimeGrid g = build_grid(0.0, 1.0, 10);
  const BrownianDriver d = sample_brownian(g, 2, 11);
  CHECK_THROWS_AS(restart_forward(spec, no_control, -1, x0_of(0.0), g, d), ConfigError);
  CHECK_THROWS_AS(restart_forward(spec, no_control, g.N + 1, x0_of(0.0), g, d), ConfigError);
}

TEST_CASE("blowup aborts with step and path diagnostics") {
  ProblemSpec spec = zero_problem();
  spec.b = [](double, const Vec& x, const Vec&, double) -> Vec { return x.array().pow(3); };
  const TimeGrid g = build_grid(0.0, 1.0, 50);
  const BrownianDriver d = sample_brownian(g, 2, 12);
  try {
    simulate_forward(spec, no_control, x0_of(50.0), g, d);
    FAIL("expected a blowup");
  } catch (const SimulationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("step") != std::string::npos);
    CHECK(msg.find("path") != std::string::npos);
  }
}

TEST_CASE("strong error on geometric paths decays like sqrt(dt)") {
  const double mu = 0.1, sg = 0.2, x0 = 1.0, T = 1.0;
  const ProblemSpec spec = gbm_problem(mu, sg);
  std::vector<int> Ns = {25, 50, 100, 200};
  std::vector<double> errs;
  for (int N : Ns) {
    const TimeGrid g = build_grid(0.0, T, N);
    const BrownianDriver d = sample_brownian(g, 4000, 13);
    const StatePaths s = simulate_forward(spec, no_control, x0_of(x0), g, d);
    double ss = 0.0;
    for (int m = 0; m < d.M; ++m) {
      const double exact = x0 * std::exp((mu - 0.5 * sg * sg) * T + sg * d.W(m, g.N));
      const double diff = s.X.scalar(m, g.N) - exact;
      ss += diff * diff;
    }
    errs.push_back(std::sqrt(ss / d.M));
  }
  // least-squares slope of log(err) against log(N); strong order 1/2 means -0.5
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const int n = static_cast<int>(Ns.size());
  for (int i = 0; i < n; ++i) {
    const double lx = std::log(static_cast<double>(Ns[i]));
    const double ly = std::log(errs[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double slope = -(n * sxy - sx * sy) / (n * sxx - sx * sx);
  CHECK(slope > 0.35);
  CHECK(slope < 0.65);
}

TEST_CASE("dimension mismatches are caught before simulating") {
  ProblemSpec spec = zero_problem();
  spec.n = 2;
  spec.b = [](double, const Vec&, const Vec&, double) -> Vec {
    return Vec::Zero(1);  // one component against a two-dimensional state
  };
  const TimeGrid g = build_grid(0.0, 1.0, 10);
  const BrownianDriver d = sample_brownian(g, 2, 15);
  CHECK_THROWS_AS(simulate_forward(spec, no_control, Eigen::Vector2d(1.0, 1.0), g, d),
                  ConfigError);
}
