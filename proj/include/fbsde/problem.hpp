#pragma once

#include <functional>

#include <Eigen/Dense>

#include "fbsde/errors.hpp"
#include "fbsde/fields.hpp"

namespace fbsde {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// The controlled forward-backward system (b, sigma, f, h):
//   dX = b(t,X,u) dt + sigma(t,X,u) dW          X in R^n, scalar W
//   dY = -f(t,X,Y,Z,u) dt + Z dW                Y, Z scalar
//   Y_T = h(X_T)
// Coefficients may depend on the Brownian level w, which realizes their
// randomness while keeping (X, W) jointly Markov.
//
// Partial derivatives may be supplied analytically; missing ones fall back to
// central finite differences with step fd_step*(1+|value|) unless allow_fd is
// cleared, in which case their use is a configuration error.
struct ProblemSpec {
  int n = 1;  // state dimension
  int k = 1;  // control dimension

  std::function<Vec(double t, const Vec& x, const Vec& u, double w)> b;
  std::function<Vec(double t, const Vec& x, const Vec& u, double w)> sigma;
  std::function<double(double t, const Vec& x, double y, double z, const Vec& u, double w)> f;
  std::function<double(const Vec& x, double w)> h;

  // optional analytic derivatives
  std::function<Mat(double t, const Vec& x, const Vec& u, double w)> b_x, sigma_x;    // n x n
  std::function<Mat(double t, const Vec& x, const Vec& u, double w)> b_u, sigma_u;    // n x k
  std::function<Vec(double t, const Vec& x, double y, double z, const Vec& u, double w)> f_x;  // n
  std::function<double(double t, const Vec& x, double y, double z, const Vec& u, double w)> f_y, f_z;
  std::function<Vec(double t, const Vec& x, double y, double z, const Vec& u, double w)> f_u;  // k
  std::function<Vec(const Vec& x, double w)> h_x;  // n

  bool allow_fd = true;
  double fd_step = 1e-6;

  // --- derivative accessors (analytic when available, else central FD) ---

  Mat bx(double t, const Vec& x, const Vec& u, double w) const {
    if (b_x) return b_x(t, x, u, w);
    return fd_jacobian_x([&](const Vec& xx) { return b(t, xx, u, w); }, x);
  }
  Mat sigmax(double t, const Vec& x, const Vec& u, double w) const {
    if (sigma_x) return sigma_x(t, x, u, w);
    return fd_jacobian_x([&](const Vec& xx) { return sigma(t, xx, u, w); }, x);
  }
  Mat bu(double t, const Vec& x, const Vec& u, double w) const {
    if (b_u) return b_u(t, x, u, w);
    return fd_jacobian_x([&](const Vec& uu) { return b(t, x, uu, w); }, u);
  }
  Mat sigmau(double t, const Vec& x, const Vec& u, double w) const {
    if (sigma_u) return sigma_u(t, x, u, w);
    return fd_jacobian_x([&](const Vec& uu) { return sigma(t, x, uu, w); }, u);
  }
  Vec fx(double t, const Vec& x, double y, double z, const Vec& u, double w) const {
    if (f_x) return f_x(t, x, y, z, u, w);
    return fd_gradient([&](const Vec& xx) { return f(t, xx, y, z, u, w); }, x);
  }
  double fy(double t, const Vec& x, double y, double z, const Vec& u, double w) const {
    if (f_y) return f_y(t, x, y, z, u, w);
    return fd_scalar([&](double yy) { return f(t, x, yy, z, u, w); }, y);
  }
  double fz(double t, const Vec& x, double y, double z, const Vec& u, double w) const {
    if (f_z) return f_z(t, x, y, z, u, w);
    return fd_scalar([&](double zz) { return f(t, x, y, zz, u, w); }, z);
  }
  Vec fu(double t, const Vec& x, double y, double z, const Vec& u, double w) const {
    if (f_u) return f_u(t, x, y, z, u, w);
    return fd_gradient([&](const Vec& uu) { return f(t, x, y, z, uu, w); }, u);
  }
  Vec hx(const Vec& x, double w) const {
    if (h_x) return h_x(x, w);
    return fd_gradient([&](const Vec& xx) { return h(xx, w); }, x);
  }

 private:
  void require_fd() const {
    if (!allow_fd)
      throw ConfigError(
          "missing analytic derivative and finite-difference fallback is disabled");
  }

  template <class Fn>
  Mat fd_jacobian_x(const Fn& fn, const Vec& at) const {
    require_fd();
    const int cols = static_cast<int>(at.size());
    Vec xp = at, xm = at;
    const Vec f0 = fn(at);
    Mat J(f0.size(), cols);
    for (int j = 0; j < cols; ++j) {
      const double step = fd_step * (1.0 + std::abs(at[j]));
      xp[j] = at[j] + step;
      xm[j] = at[j] - step;
      J.col(j) = (fn(xp) - fn(xm)) / (2.0 * step);
      xp[j] = at[j];
      xm[j] = at[j];
    }
    return J;
  }

  template <class Fn>
  Vec fd_gradient(const Fn& fn, const Vec& at) const {
    require_fd();
    Vec g(at.size());
    Vec xp = at, xm = at;
    for (int j = 0; j < at.size(); ++j) {
      const double step = fd_step * (1.0 + std::abs(at[j]));
      xp[j] = at[j] + step;
      xm[j] = at[j] - step;
      g[j] = (fn(xp) - fn(xm)) / (2.0 * step);
      xp[j] = at[j];
      xm[j] = at[j];
    }
    return g;
  }

  template <class Fn>
  double fd_scalar(const Fn& fn, double at) const {
    require_fd();
    const double step = fd_step * (1.0 + std::abs(at));
    return (fn(at + step) - fn(at - step)) / (2.0 * step);
  }
};

}  // namespace fbsde
