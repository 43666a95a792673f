#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "fbsde/errors.hpp"

namespace fbsde {

namespace detail {
inline void walk_exponents(int V, int pos, int remaining, std::vector<int>& cur,
                           std::vector<std::vector<int>>& out) {
  if (pos == V) {
    out.push_back(cur);
    return;
  }
  for (int e = 0; e <= remaining; ++e) {
    cur[pos] = e;
    walk_exponents(V, pos + 1, remaining - e, cur, out);
  }
  cur[pos] = 0;
}
}  // namespace detail

// Total-degree polynomial features in a chosen subset of the state components
// and (optionally) the Brownian level w. The constant function is always the
// first feature.
struct RegressionBasis {
  int degree = 2;
  std::vector<int> state_components;  // indices into x when use_all_state is false
  bool use_all_state = true;
  bool use_w = true;
  double ridge = 1e-8;

  std::vector<int> variables(int n) const {
    std::vector<int> vars;
    if (use_all_state) {
      for (int i = 0; i < n; ++i) vars.push_back(i);
    } else {
      vars = state_components;
    }
    if (use_w) vars.push_back(n);  // index n stands for w
    return vars;
  }

  int feature_count(int n) const {
    const int V = static_cast<int>(variables(n).size());
    long long c = 1;  // C(degree + V, V)
    for (int i = 1; i <= V; ++i) c = c * (degree + i) / i;
    return static_cast<int>(c);
  }
};

// Precompiled evaluation plan for a fixed state dimension.
class CompiledBasis {
 public:
  CompiledBasis() = default;
  CompiledBasis(const RegressionBasis& basis, int n) : n_(n), vars_(basis.variables(n)) {
    if (vars_.empty() && basis.degree > 0)
      throw ConfigError("regression basis selects no variables");
    std::vector<int> cur(vars_.size(), 0);
    detail::walk_exponents(static_cast<int>(vars_.size()), 0, basis.degree, cur, exps_);
  }

  int count() const { return static_cast<int>(exps_.size()); }

  void eval(const Eigen::VectorXd& x, double w, Eigen::Ref<Eigen::VectorXd> out) const {
    for (size_t j = 0; j < exps_.size(); ++j) {
      double v = 1.0;
      for (size_t a = 0; a < vars_.size(); ++a) {
        const double base = (vars_[a] == n_) ? w : x[vars_[a]];
        for (int e = 0; e < exps_[j][a]; ++e) v *= base;
      }
      out[static_cast<int>(j)] = v;
    }
  }

  Eigen::VectorXd eval(const Eigen::VectorXd& x, double w) const {
    Eigen::VectorXd out(count());
    eval(x, w, out);
    return out;
  }

 private:
  int n_ = 0;
  std::vector<int> vars_;
  std::vector<std::vector<int>> exps_;  // first entry is all zeros (the constant)
};

// A fitted linear model on standardized features. Columns with (numerically)
// zero variance are dropped from the fit; the constant column absorbs them.
struct LinearFit {
  Eigen::VectorXd col_mean;
  Eigen::VectorXd col_scale;  // 0 marks a dropped column
  Eigen::MatrixXd beta;       // B x d coefficients on standardized features

  void predict(const Eigen::MatrixXd& raw, Eigen::MatrixXd& out) const {
    const int B = static_cast<int>(col_mean.size());
    Eigen::MatrixXd std_feats = raw;
    for (int j = 1; j < B; ++j) {
      if (col_scale[j] > 0.0)
        std_feats.col(j) = (raw.col(j).array() - col_mean[j]) / col_scale[j];
      else
        std_feats.col(j).setZero();
    }
    std_feats.col(0).setOnes();
    out.noalias() = std_feats * beta;
  }

  Eigen::VectorXd predict_one(const Eigen::VectorXd& raw) const {
    const int B = static_cast<int>(col_mean.size());
    Eigen::VectorXd s(B);
    s[0] = 1.0;
    for (int j = 1; j < B; ++j)
      s[j] = (col_scale[j] > 0.0) ? (raw[j] - col_mean[j]) / col_scale[j] : 0.0;
    return beta.transpose() * s;
  }
};

// Ridge least squares of (possibly multi-column) targets on raw features.
// With ridge == 0 a rank-deficient design matrix is an error; the fix is to
// set ridge > 0. The ridge is applied to the normalized Gram matrix, so its
// scale is independent of M and of the feature units.
inline LinearFit fit_ridge(const Eigen::MatrixXd& raw_features, const Eigen::MatrixXd& targets,
                           double ridge) {
  const int M = static_cast<int>(raw_features.rows());
  const int B = static_cast<int>(raw_features.cols());
  if (M == 0 || B == 0) throw RegressionError("regression needs a nonempty design matrix");

  LinearFit fit;
  fit.col_mean.resize(B);
  fit.col_scale.resize(B);
  Eigen::MatrixXd std_feats(M, B);
  std_feats.col(0).setOnes();
  fit.col_mean[0] = 0.0;
  fit.col_scale[0] = 1.0;
  for (int j = 1; j < B; ++j) {
    const double mean = raw_features.col(j).mean();
    const double var = (raw_features.col(j).array() - mean).square().sum() / M;
    const double sd = std::sqrt(var);
    fit.col_mean[j] = mean;
    if (sd > 1e-12 * (1.0 + std::abs(mean))) {
      fit.col_scale[j] = sd;
      std_feats.col(j) = (raw_features.col(j).array() - mean) / sd;
    } else {
      fit.col_scale[j] = 0.0;
      std_feats.col(j).setZero();
    }
  }

  Eigen::MatrixXd gram = std_feats.transpose() * std_feats / M;
  for (int j = 1; j < B; ++j) {
    if (fit.col_scale[j] == 0.0) gram(j, j) = 1.0;  // keep the system solvable
  }

  if (ridge <= 0.0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (lo < 1e-12 * std::max(hi, 1.0))
      throw RegressionError(
          "rank-deficient design matrix in least-squares step; set ridge > 0 to regularize");
  } else {
    // the intercept is never penalized, so constant targets are fit exactly
    for (int j = 1; j < B; ++j) gram(j, j) += ridge;
  }

  const Eigen::MatrixXd rhs = std_feats.transpose() * targets / M;
  fit.beta = gram.ldlt().solve(rhs);
  for (int j = 1; j < B; ++j) {
    if (fit.col_scale[j] == 0.0) fit.beta.row(j).setZero();
  }
  return fit;
}

}  // namespace fbsde
