#pragma once

#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/Dense>

#include "fbsde/errors.hpp"

namespace fbsde {

enum class Growth { bounded, linear, quadratic };

// An adapted random coefficient, realized as a deterministic pure function of
// (t, x, w) where w is the Brownian level driving the randomness.
template <class Value>
struct CoefficientField {
  std::function<Value(double t, const Eigen::VectorXd& x, double w)> eval;
  Growth growth = Growth::linear;
  double bound = std::numeric_limits<double>::infinity();  // used when growth == bounded

  Value operator()(double t, const Eigen::VectorXd& x, double w) const { return eval(t, x, w); }
};

using ScalarField = CoefficientField<double>;
using VectorField = CoefficientField<Eigen::VectorXd>;
using MatrixField = CoefficientField<Eigen::MatrixXd>;

inline ScalarField constant_field(double c) {
  return {[c](double, const Eigen::VectorXd&, double) { return c; }, Growth::bounded,
          std::abs(c)};
}

inline MatrixField constant_field(const Eigen::MatrixXd& m) {
  const double b = m.cwiseAbs().maxCoeff();
  return {[m](double, const Eigen::VectorXd&, double) { return m; }, Growth::bounded, b};
}

namespace detail {
inline double magnitude(double v) { return std::abs(v); }
inline double magnitude(const Eigen::VectorXd& v) { return v.cwiseAbs().maxCoeff(); }
inline double magnitude(const Eigen::MatrixXd& v) { return v.cwiseAbs().maxCoeff(); }
}  // namespace detail

// Samples the field over a box of probe inputs and checks the declared bound.
// Returns the largest magnitude seen.
template <class Value>
double probe_bound(const CoefficientField<Value>& field, int state_dim, double t0, double T,
                   double x_radius = 5.0, double w_radius = 4.0, int samples_per_axis = 7) {
  double worst = 0.0;
  for (int it = 0; it <= samples_per_axis; ++it) {
    const double t = t0 + (T - t0) * it / samples_per_axis;
    for (int iw = 0; iw <= samples_per_axis; ++iw) {
      const double w = -w_radius + 2.0 * w_radius * iw / samples_per_axis;
      for (int ix = 0; ix <= samples_per_axis; ++ix) {
        Eigen::VectorXd x = Eigen::VectorXd::Constant(
            state_dim, -x_radius + 2.0 * x_radius * ix / samples_per_axis);
        worst = std::max(worst, detail::magnitude(field(t, x, w)));
      }
    }
  }
  if (field.growth == Growth::bounded && worst > field.bound * (1.0 + 1e-12)) {
    throw ConfigError("coefficient field exceeds its declared bound on probed inputs");
  }
  return worst;
}

}  // namespace fbsde
