#pragma once

// Discretised functional data: grids, curve samples, B-spline smoothing with
// derivatives, and functional principal component analysis.

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace fplm::fda {

/// Observation points shared by every curve of a sample.
///
/// Points are strictly increasing and lie inside [support_lo, support_hi].
/// Trapezoidal quadrature weights are precomputed because nearly every
/// functional operation integrates over the grid.
class Grid {
 public:
  Grid() = default;
  explicit Grid(std::vector<double> points);
  Grid(std::vector<double> points, double support_lo, double support_hi);

  static Grid uniform(double lo, double hi, std::size_t m);

  std::size_t size() const { return points_.size(); }
  const std::vector<double>& points() const { return points_; }
  double operator[](std::size_t j) const { return points_[j]; }
  double support_lo() const { return support_lo_; }
  double support_hi() const { return support_hi_; }

  /// Trapezoidal-rule weights; sum equals points.back() - points.front().
  const Eigen::VectorXd& weights() const { return weights_; }

  bool same_points(const Grid& other, double tol = 1e-12) const;

 private:
  std::vector<double> points_;
  double support_lo_ = 0.0;
  double support_hi_ = 0.0;
  Eigen::VectorXd weights_;
};

/// n curves evaluated on a common grid; row i is curve i.
class FunctionalSample {
 public:
  FunctionalSample() = default;
  FunctionalSample(Grid grid, Eigen::MatrixXd values);

  const Grid& grid() const { return grid_; }
  const Eigen::MatrixXd& values() const { return values_; }
  std::size_t n() const { return static_cast<std::size_t>(values_.rows()); }
  std::size_t m() const { return grid_.size(); }
  Eigen::VectorXd curve(std::size_t i) const { return values_.row(static_cast<Eigen::Index>(i)).transpose(); }

  FunctionalSample rows(std::span<const std::size_t> idx) const;
  FunctionalSample head(std::size_t count) const;
  FunctionalSample tail_from(std::size_t first) const;

 private:
  Grid grid_;
  Eigen::MatrixXd values_;
};

/// Least-squares B-spline representation of every curve in a sample.
struct BSplineRep {
  int order = 4;               // polynomial degree + 1
  Eigen::VectorXd knots;       // full knot vector, boundary multiplicity = order
  Eigen::MatrixXd coefs;       // n x p
  Grid grid;                   // grid the curves were observed on

  std::size_t n_basis() const { return static_cast<std::size_t>(coefs.cols()); }
  /// Curves reconstructed on the original grid.
  FunctionalSample evaluate() const;
};

/// Scaled B-spline basis matrix (rows = x values, columns = basis functions).
/// x must lie inside [knots[order-1], knots[p]].
Eigen::MatrixXd bspline_basis(const Eigen::VectorXd& knots, int order,
                              std::span<const double> x);

/// Full knot vector with interior knots at grid quantiles.
Eigen::VectorXd quantile_knot_vector(const Grid& grid, int order, int n_interior_knots);

int default_interior_knots(std::size_t m);

BSplineRep fit_bsplines(const FunctionalSample& sample, int order, int n_interior_knots);

/// Differentiate q times by differencing coefficients; order drops by q.
BSplineRep differentiate(const BSplineRep& rep, int q);

/// q-th derivative curves evaluated on the original grid.
FunctionalSample derivative(const BSplineRep& rep, int q);

struct FpcaResult {
  Eigen::VectorXd mean_curve;      // length m
  Eigen::MatrixXd eigenfunctions;  // K x m, orthonormal under the grid weights
  Eigen::VectorXd eigenvalues;     // length K, nonincreasing
  Eigen::MatrixXd scores;          // n x K
  Grid grid;

  std::size_t n_components() const { return static_cast<std::size_t>(eigenfunctions.rows()); }
  /// Scores of (possibly new) curves against the frozen mean and eigenfunctions.
  Eigen::MatrixXd project(const FunctionalSample& curves) const;
  /// mean + scores * eigenfunctions, on the grid.
  Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& scores) const;
};

/// FPCA through the n x n quadrature-weighted Gram matrix of centred curves.
FpcaResult fpca(const FunctionalSample& sample, int n_components);

/// Trapezoidal approximation of the integral of x(t) * beta(t).
double inner_product(std::span<const double> x, std::span<const double> beta, const Grid& grid);
double inner_product(const Eigen::VectorXd& x, const Eigen::VectorXd& beta, const Grid& grid);

}  // namespace fplm::fda
