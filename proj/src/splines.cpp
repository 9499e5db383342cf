#include "fueltrends/splines.hpp"

#include <cmath>
#include <stdexcept>

namespace fueltrends::splines {

namespace {

inline double kernel(double r) {
  double a = std::fabs(r);
  return a * a * a / 12.0;
}

}  // namespace

int SplineBasis::row_of_year(int year) const {
  for (size_t i = 0; i < years.size(); ++i) {
    if (years[i] == year) return static_cast<int>(i);
  }
  return -1;
}

double SplineBasis::column_at(int j, double year) const {
  double s = standardize(year);
  if (j == 0) return s;
  const int col = j - 1;
  double f = affine(0, col) + affine(1, col) * s;
  for (int a = 0; a < T(); ++a) f += rbf_w(a, col) * kernel(s - knots[a]);
  return f;
}

SplineBasis build_thin_plate_basis(const std::vector<int>& years, int K) {
  const int T = static_cast<int>(years.size());
  if (K < 3) throw std::domain_error("build_thin_plate_basis: K must be >= 3");
  if (T < K) throw std::domain_error("build_thin_plate_basis: need at least K years");
  for (int i = 1; i < T; ++i) {
    if (years[i] <= years[i - 1])
      throw std::domain_error("build_thin_plate_basis: years must be strictly increasing");
  }

  SplineBasis basis;
  basis.years = years;
  basis.K = K;
  basis.year0 = years.front();
  basis.year1 = years.back();

  Eigen::VectorXd s(T);
  for (int i = 0; i < T; ++i) s[i] = basis.standardize(years[i]);
  basis.knots = s;

  Eigen::MatrixXd E(T, T);
  for (int i = 0; i < T; ++i) {
    for (int j = 0; j < T; ++j) E(i, j) = kernel(s[i] - s[j]);
  }

  Eigen::MatrixXd N(T, 2);
  N.col(0).setOnes();
  N.col(1) = s;
  Eigen::MatrixXd P = N * (N.transpose() * N).ldlt().solve(N.transpose());
  Eigen::MatrixXd M = Eigen::MatrixXd::Identity(T, T) - P;
  Eigen::MatrixXd Et = M * E * M;
  Et = 0.5 * (Et + Et.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Et);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("build_thin_plate_basis: eigendecomposition failed");
  // eigenvalues come out ascending; keep the K-1 largest
  const int keep = K - 1;
  Eigen::VectorXd lam(keep);
  Eigen::MatrixXd V(T, keep);
  for (int j = 0; j < keep; ++j) {
    int src = T - 1 - j;
    lam[j] = es.eigenvalues()[src];
    V.col(j) = es.eigenvectors().col(src);
    // fix the sign so rebuilds are bit-identical and ordering-stable
    int arg = 0;
    V.col(j).cwiseAbs().maxCoeff(&arg);
    if (V(arg, j) < 0.0) V.col(j) = -V.col(j);
  }
  if (lam[keep - 1] <= 1e-12 * lam[0])
    throw std::runtime_error("build_thin_plate_basis: kernel rank too low for K");

  basis.X.resize(T, K);
  basis.X.col(0) = s;
  basis.X.rightCols(keep) = V;

  // natural interpolant of each eigenvector column: radial weights V_j / lam_j
  // plus the exact affine remainder
  basis.rbf_w.resize(T, keep);
  basis.affine.resize(2, keep);
  for (int j = 0; j < keep; ++j) {
    Eigen::VectorXd w = V.col(j) / lam[j];
    basis.rbf_w.col(j) = w;
    Eigen::VectorXd resid = V.col(j) - E * w;
    basis.affine.col(j) = (N.transpose() * N).ldlt().solve(N.transpose() * resid);
  }

  // diagonal penalty 1/lam_j, rescaled so the largest eigenvalue is 1
  Eigen::VectorXd pen(keep);
  for (int j = 0; j < keep; ++j) pen[j] = 1.0 / lam[j];
  pen /= pen.maxCoeff();
  basis.penalty = pen.asDiagonal();
  return basis;
}

double evaluate_trend(const SplineBasis& basis, const SplineBlock& block, int year) {
  if (block.nonlinear.size() != basis.K - 1)
    throw std::domain_error("evaluate_trend: coefficient length mismatch");
  int row = basis.row_of_year(year);
  if (row >= 0) {
    double f = block.intercept + block.linear * basis.X(row, 0);
    for (int j = 1; j < basis.K; ++j) f += block.nonlinear[j - 1] * basis.X(row, j);
    return f;
  }
  double f = block.intercept + block.linear * basis.standardize(year);
  for (int j = 1; j < basis.K; ++j) f += block.nonlinear[j - 1] * basis.column_at(j, year);
  return f;
}

double penalty_quadform(const SplineBasis& basis, const Eigen::VectorXd& nonlinear,
                        double lambda) {
  if (nonlinear.size() != basis.K - 1)
    throw std::domain_error("penalty_quadform: coefficient length mismatch");
  return lambda * nonlinear.dot(basis.penalty * nonlinear);
}

}  // namespace fueltrends::splines
