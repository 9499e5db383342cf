#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numeric>
#include <vector>

#include "fueltrends/rng.hpp"
#include "fueltrends/splines.hpp"

using namespace fueltrends;
using namespace fueltrends::splines;

namespace {

std::vector<int> year_range(int a, int b) {
  std::vector<int> v(b - a + 1);
  std::iota(v.begin(), v.end(), a);
  return v;
}

// Penalized least squares on the full design [1 | X], ridge only on the
// non-linear block. Independent of the library's evaluation path.
Eigen::VectorXd fit_penalized(const SplineBasis& basis, const Eigen::VectorXd& y,
                              double lambda) {
  const int T = basis.T(), K = basis.K;
  Eigen::MatrixXd D(T, K + 1);
  D.col(0).setOnes();
  D.rightCols(K) = basis.X;
  Eigen::MatrixXd A = D.transpose() * D;
  A.bottomRightCorner(K - 1, K - 1) += lambda * basis.penalty;
  return A.ldlt().solve(D.transpose() * y);
}

SplineBlock block_from_coef(const Eigen::VectorXd& c) {
  SplineBlock b;
  b.intercept = c[0];
  b.linear = c[1];
  b.nonlinear = c.segment(2, c.size() - 2);
  return b;
}

}  // namespace

TEST_CASE("basis over 1990..2017 with K = 10 is 28 x 10") {
  auto basis = build_thin_plate_basis(year_range(1990, 2017), 10);
  CHECK(basis.X.rows() == 28);
  CHECK(basis.X.cols() == 10);
  CHECK(basis.penalty.rows() == 9);
  CHECK(basis.penalty.cols() == 9);
  // linear column is the standardized time, affinely increasing over [0,1]
  CHECK(basis.X(0, 0) == doctest::Approx(0.0));
  CHECK(basis.X(27, 0) == doctest::Approx(1.0));
  for (int t = 1; t < 28; ++t) {
    CHECK(basis.X(t, 0) - basis.X(t - 1, 0) == doctest::Approx(1.0 / 27.0));
  }
}

TEST_CASE("penalty is symmetric positive semidefinite with unit top eigenvalue") {
  for (int K : {3, 6, 10}) {
    auto basis = build_thin_plate_basis(year_range(1990, 2017), K);
    Eigen::MatrixXd P = basis.penalty;
    CHECK((P - P.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P);
    CHECK(es.eigenvalues().minCoeff() > -1e-10);
    CHECK(es.eigenvalues().maxCoeff() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("linear functions of time carry zero penalty and are reproduced exactly") {
  auto years = year_range(1990, 2017);
  auto basis = build_thin_plate_basis(years, 10);
  Eigen::VectorXd y(basis.T());
  for (int t = 0; t < basis.T(); ++t) y[t] = 2.0 - 3.0 * basis.X(t, 0);
  Eigen::VectorXd c = fit_penalized(basis, y, 0.0);
  SplineBlock b = block_from_coef(c);
  // least squares puts nothing on the non-linear block
  CHECK(b.nonlinear.cwiseAbs().maxCoeff() < 1e-8);
  CHECK(penalty_quadform(basis, b.nonlinear, std::exp(b.log_lambda)) < 1e-10);
  for (int t = 0; t < basis.T(); ++t) {
    CHECK(std::fabs(evaluate_trend(basis, b, years[t]) - y[t]) < 1e-8);
  }
}

TEST_CASE("least-squares fit of a smooth function is reproduced by evaluate_trend") {
  auto years = year_range(1990, 2017);
  auto basis = build_thin_plate_basis(years, 10);
  Eigen::VectorXd y(basis.T());
  for (int t = 0; t < basis.T(); ++t) {
    double s = basis.X(t, 0);
    y[t] = std::sin(3.0 * s) + 0.5 * s * s;
  }
  Eigen::VectorXd c = fit_penalized(basis, y, 0.0);
  Eigen::VectorXd fitted(basis.T());
  {
    Eigen::MatrixXd D(basis.T(), basis.K + 1);
    D.col(0).setOnes();
    D.rightCols(basis.K) = basis.X;
    fitted = D * c;
  }
  SplineBlock b = block_from_coef(c);
  for (int t = 0; t < basis.T(); ++t) {
    CHECK(std::fabs(evaluate_trend(basis, b, years[t]) - fitted[t]) < 1e-8);
  }
  // K = 10 is ample for this target; the fit should also be close to y itself
  for (int t = 0; t < basis.T(); ++t) CHECK(std::fabs(fitted[t] - y[t]) < 1e-3);
}

TEST_CASE("off-grid evaluation interpolates the columns at the knots") {
  auto years = year_range(1995, 2010);
  auto basis = build_thin_plate_basis(years, 6);
  // column_at must agree with the stored X at every grid year
  for (int t = 0; t < basis.T(); ++t) {
    for (int j = 0; j < basis.K; ++j) {
      CHECK(std::fabs(basis.column_at(j, years[t]) - basis.X(t, j)) < 1e-8);
    }
  }
}

TEST_CASE("forecast years evaluate finitely and extend the linear column") {
  auto years = year_range(1990, 2017);
  auto basis = build_thin_plate_basis(years, 10);
  Rng rng = make_rng(41, 0);
  SplineBlock b;
  b.intercept = 0.3;
  b.linear = -1.2;
  b.nonlinear = Eigen::VectorXd::NullaryExpr(9, [&](Eigen::Index) { return 0.3 * rnorm(rng); });
  for (int year : {2018, 2020, 2022}) {
    double f = evaluate_trend(basis, b, year);
    CHECK(std::isfinite(f));
  }
  CHECK(basis.column_at(0, 2022) ==
        doctest::Approx((2022.0 - 1990.0) / 27.0));
}

TEST_CASE("larger lambda yields smoother penalized fits") {
  auto years = year_range(1990, 2017);
  auto basis = build_thin_plate_basis(years, 10);
  Rng rng = make_rng(42, 0);
  Eigen::VectorXd y(basis.T());
  for (int t = 0; t < basis.T(); ++t) {
    double s = basis.X(t, 0);
    y[t] = std::sin(8.0 * s) + 0.4 * rnorm(rng);
  }
  double prev = -1.0;
  bool first = true;
  for (double lambda : {0.01, 0.1, 1.0, 10.0, 100.0}) {
    Eigen::VectorXd c = fit_penalized(basis, y, lambda);
    SplineBlock b = block_from_coef(c);
    double rough = penalty_quadform(basis, b.nonlinear, 1.0);
    if (!first) CHECK(rough < prev);
    prev = rough;
    first = false;
  }
}

TEST_CASE("construction is deterministic") {
  auto a = build_thin_plate_basis(year_range(1990, 2017), 10);
  auto b = build_thin_plate_basis(year_range(1990, 2017), 10);
  CHECK((a.X - b.X).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.penalty - b.penalty).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("preconditions are enforced") {
  CHECK_THROWS_AS(build_thin_plate_basis({1990, 1990, 1991}, 3), std::domain_error);
  CHECK_THROWS_AS(build_thin_plate_basis({1990, 1991}, 3), std::domain_error);
  CHECK_THROWS_AS(build_thin_plate_basis(year_range(1990, 2017), 2), std::domain_error);
}
