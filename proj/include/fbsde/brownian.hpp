#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

#include "fbsde/errors.hpp"
#include "fbsde/time_grid.hpp"

namespace fbsde {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stream of standard normals for one path, reproducible across runs.
// Uniforms are built from raw 64-bit draws so the sequence does not depend
// on the standard library's distribution implementation.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t stream)
      : eng_(splitmix64(seed ^ splitmix64(stream + 0x51ed270b0f4dull))) {}

  double next() {
    // Box-Muller, one normal per pair of uniforms.
    const double u1 = uniform_open();
    const double u2 = uniform_open();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

 private:
  double uniform_open() {
    // in (0, 1]: shift by one ulp step so log() never sees zero
    return (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;
  }
  std::mt19937_64 eng_;
};

}  // namespace detail

// Discretized Brownian driver: per-path increments ~ N(0, dt) and their
// cumulative sums. Even path counts use antithetic pairing: path 2j+1
// carries the negated increments of path 2j.
struct BrownianDriver {
  std::uint64_t seed = 0;
  int M = 0;       // path count
  int N = 0;       // step count
  bool antithetic = false;
  Eigen::MatrixXd increments;  // M x N
  Eigen::MatrixXd W;           // M x (N+1), W(m, 0) = 0

  double dW(int m, int k) const { return increments(m, k); }
  double level(int m, int k) const { return W(m, k); }
};

inline BrownianDriver sample_brownian(const TimeGrid& grid, int M, std::uint64_t seed,
                                      bool antithetic = true) {
  if (M < 1) throw ConfigError("sample_brownian: path count must be >= 1");
  BrownianDriver d;
  d.seed = seed;
  d.M = M;
  d.N = grid.N;
  d.antithetic = antithetic && (M % 2 == 0);
  d.increments.resize(M, grid.N);
  d.W.resize(M, grid.N + 1);
  const double sqrt_dt = std::sqrt(grid.dt);
  for (int m = 0; m < M; ++m) {
    d.W(m, 0) = 0.0;
    if (d.antithetic && (m % 2 == 1)) {
      for (int k = 0; k <= grid.N; ++k) d.W(m, k) = -d.W(m - 1, k);
    } else {
      detail::NormalStream stream(seed, static_cast<std::uint64_t>(m));
      for (int k = 0; k < grid.N; ++k) d.W(m, k + 1) = d.W(m, k) + sqrt_dt * stream.next();
    }
    // increments are re-derived from the stored levels so that
    // W(m, k+1) - W(m, k) == increments(m, k) holds bit-exactly
    for (int k = 0; k < grid.N; ++k) d.increments(m, k) = d.W(m, k + 1) - d.W(m, k);
  }
  return d;
}

// Mean and standard error of a per-path statistic. Antithetic pairs are
// averaged first so the error estimate respects the pairing.
inline std::pair<double, double> mc_mean_stderr(const Eigen::VectorXd& per_path,
                                                bool antithetic) {
  const int M = static_cast<int>(per_path.size());
  if (M == 0) return {0.0, 0.0};
  Eigen::VectorXd groups;
  if (antithetic && M % 2 == 0) {
    groups.resize(M / 2);
    for (int j = 0; j < M / 2; ++j) groups[j] = 0.5 * (per_path[2 * j] + per_path[2 * j + 1]);
  } else {
    groups = per_path;
  }
  const int G = static_cast<int>(groups.size());
  const double mean = groups.mean();
  if (G < 2) return {mean, 0.0};
  const double var = (groups.array() - mean).square().sum() / (G - 1);
  return {mean, std::sqrt(var / G)};
}

}  // namespace fbsde
