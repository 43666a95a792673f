#pragma once

#include <vector>

#include "fbsde/errors.hpp"

namespace fbsde {

// Uniform discretization of [t0, T] into N steps.
struct TimeGrid {
  double t0 = 0.0;
  double T = 1.0;
  int N = 1;
  double dt = 1.0;
  std::vector<double> nodes;  // N+1 nodes, nodes[0] = t0, nodes[N] = T
};

inline TimeGrid build_grid(double t0, double T, int N) {
  if (N < 1) throw ConfigError("build_grid: step count must be >= 1");
  if (!(T > t0)) throw ConfigError("build_grid: horizon must satisfy T > t0");
  TimeGrid g;
  g.t0 = t0;
  g.T = T;
  g.N = N;
  g.dt = (T - t0) / N;
  g.nodes.resize(N + 1);
  for (int k = 0; k <= N; ++k) g.nodes[k] = t0 + k * g.dt;
  g.nodes[N] = T;  // avoid accumulated rounding at the right endpoint
  return g;
}

}  // namespace fbsde
