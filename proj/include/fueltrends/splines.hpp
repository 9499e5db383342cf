#pragma once

#include <Eigen/Dense>
#include <vector>

namespace fueltrends::splines {

// Low-rank thin-plate basis over a fixed integer year grid.
//
// Construction: standardize years to s in [0,1], build the radial kernel
// E_ab = |s_a - s_b|^3 / 12 over the grid, project out the affine null space
// {1, s}, and keep the K-1 leading eigenvectors of the projected kernel.
// X column 0 is the standardized linear term; columns 1..K-1 hold the
// eigenvectors (orthonormal at the knots). The penalty on the non-linear
// coefficients is diagonal, rescaled so its largest eigenvalue is 1.
// Off-grid years are evaluated through the natural radial-basis interpolant
// of each column, which extends the basis beyond the grid for forecasting.
struct SplineBasis {
  std::vector<int> years;
  int K = 0;
  double year0 = 0.0, year1 = 0.0;
  Eigen::MatrixXd X;        // T x K
  Eigen::MatrixXd penalty;  // (K-1) x (K-1)

  Eigen::VectorXd knots;    // standardized years
  Eigen::MatrixXd rbf_w;    // T x (K-1)
  Eigen::MatrixXd affine;   // 2 x (K-1), constant and linear corrections

  int T() const { return static_cast<int>(years.size()); }
  double standardize(double year) const { return (year - year0) / (year1 - year0); }
  // Index of a grid year, or -1 when the year is off the grid.
  int row_of_year(int year) const;
  // Basis column j (0 = linear, 1..K-1 non-linear) at an arbitrary year.
  double column_at(int j, double year) const;
};

// Coefficients for one fitted trend: f(t) = intercept + linear * s(t) +
// sum_j nonlinear[j] * X_{t, 1+j}; log_lambda scales the penalty.
struct SplineBlock {
  double intercept = 0.0;
  double linear = 0.0;
  Eigen::VectorXd nonlinear;  // K-1
  double log_lambda = 0.0;
};

// Pre: years strictly increasing, len(years) >= K >= 3.
SplineBasis build_thin_plate_basis(const std::vector<int>& years, int K);

// f at an integer year, on or beyond the grid (natural extrapolation).
double evaluate_trend(const SplineBasis& basis, const SplineBlock& block, int year);

// lambda * nl' Omega nl for the non-linear coefficient vector.
double penalty_quadform(const SplineBasis& basis, const Eigen::VectorXd& nonlinear,
                        double lambda);

}  // namespace fueltrends::splines
