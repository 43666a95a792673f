#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "fbsde/regression.hpp"

using namespace fbsde;

TEST_CASE("feature count follows the total-degree formula") {
  // C(degree + V, degree) features for V variables
  for (int degree : {1, 2, 3, 4}) {
    for (int n : {1, 2, 3}) {
      RegressionBasis with_w;
      with_w.degree = degree;
      const int V = n + 1;
      long long expect = 1;
      for (int i = 1; i <= V; ++i) expect = expect * (degree + i) / i;
      CHECK(with_w.feature_count(n) == expect);
      CHECK(CompiledBasis(with_w, n).count() == expect);

      RegressionBasis no_w = with_w;
      no_w.use_w = false;
      long long expect2 = 1;
      for (int i = 1; i <= n; ++i) expect2 = expect2 * (degree + i) / i;
      CHECK(no_w.feature_count(n) == expect2);
    }
  }
}

TEST_CASE("the constant feature comes first") {
  RegressionBasis basis;
  basis.degree = 3;
  const CompiledBasis cb(basis, 2);
  Eigen::VectorXd x(2);
  x << 1.7, -0.3;
  const Eigen::VectorXd f = cb.eval(x, 0.9);
  CHECK(f[0] == 1.0);
}

TEST_CASE("least squares recovers an in-span function exactly") {
  RegressionBasis basis;
  basis.degree = 2;
  const CompiledBasis cb(basis, 1);
  const int M = 400;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd feats(M, cb.count());
  Eigen::MatrixXd target(M, 1);
  for (int m = 0; m < M; ++m) {
    Eigen::VectorXd x(1);
    x << normal(rng);
    const double w = normal(rng);
    feats.row(m) = cb.eval(x, w);
    target(m, 0) = 2.0 - x[0] + 0.5 * x[0] * x[0] + 0.25 * w - x[0] * w;
  }
  const LinearFit fit = fit_ridge(feats, target, 0.0);
  Eigen::MatrixXd pred;
  fit.predict(feats, pred);
  CHECK((pred - target).cwiseAbs().maxCoeff() < 1e-9);
  // single-row prediction agrees with the batch path
  CHECK(fit.predict_one(feats.row(0))(0) == Catch::Approx(pred(0, 0)).margin(1e-12));
}

TEST_CASE("rank deficiency without ridge is an error that names the fix") {
  const int M = 100;
  Eigen::MatrixXd feats(M, 3);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal;
  for (int m = 0; m < M; ++m) {
    const double v = normal(rng);
    feats(m, 0) = 1.0;
    feats(m, 1) = v;
    feats(m, 2) = 2.0 * v;  // collinear with column 1
  }
  Eigen::MatrixXd target = feats.col(1);
  try {
    fit_ridge(feats, target, 0.0);
    FAIL("expected a regression error");
  } catch (const RegressionError& e) {
    CHECK(std::string(e.what()).find("ridge") != std::string::npos);
  }
  CHECK_NOTHROW(fit_ridge(feats, target, 1e-8));
}

TEST_CASE("constant columns degrade to the sample mean") {
  const int M = 50;
  Eigen::MatrixXd feats(M, 3);
  Eigen::MatrixXd target(M, 1);
  std::mt19937_64 rng(13);
  std::normal_distribution<double> normal;
  for (int m = 0; m < M; ++m) {
    feats(m, 0) = 1.0;
    feats(m, 1) = 3.0;  // no variation: dropped
    feats(m, 2) = 9.0;  // no variation: dropped
    target(m, 0) = normal(rng);
  }
  const LinearFit fit = fit_ridge(feats, target, 0.0);
  Eigen::MatrixXd pred;
  fit.predict(feats, pred);
  for (int m = 0; m < M; ++m) CHECK(pred(m, 0) == Catch::Approx(target.col(0).mean()));
}
