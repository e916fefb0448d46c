#pragma once

// Semi-metrics between curves: L2 distance of q-th derivatives (through a
// B-spline fit) and Euclidean distance of leading FPCA scores.

#include "fplm/fda.hpp"

#include <Eigen/Dense>

#include <string>
#include <string_view>
#include <variant>

namespace fplm::metric {

struct SplineConfig {
  int order = 4;
  int n_interior_knots = -1;  // < 0: fda::default_interior_knots(m)
};

struct Derivative {
  int q = 2;
};

struct FpcaScores {
  int n_components = 3;
};

struct SemiMetricSpec {
  std::variant<Derivative, FpcaScores> kind = Derivative{};
  SplineConfig spline;

  static SemiMetricSpec derivative(int q, SplineConfig spline = {});
  static SemiMetricSpec fpca(int n_components = 3);
  /// Accepts "deriv:<q>", "fpca:<K>" and "l2" (= deriv:0).
  static SemiMetricSpec parse(std::string_view text);

  bool is_derivative() const { return std::holds_alternative<Derivative>(kind); }
  std::string label() const;
  void validate() const;
};

bool operator==(const SemiMetricSpec& a, const SemiMetricSpec& b);

/// Pairwise distances; symmetric with a zero diagonal.
struct DistanceMatrix {
  Eigen::MatrixXd values;
  SemiMetricSpec spec;
};

/// A semi-metric frozen on a training sample.
///
/// Curves are mapped to coordinates in which the semi-metric is the plain
/// Euclidean distance: derivative values scaled by the square root of the
/// quadrature weights, or FPCA scores scaled by the eigenfunction norms.
/// Both maps are affine, so training fixes an offset and an m x k matrix;
/// each curve is then mapped on its own with a fixed summation order, and a
/// new curve equal to a training curve gets bit-identical coordinates.
class SemiMetric {
 public:
  static SemiMetric train(const SemiMetricSpec& spec, const fda::FunctionalSample& training);

  const SemiMetricSpec& spec() const { return spec_; }
  const fda::Grid& grid() const { return grid_; }
  std::size_t n_train() const { return static_cast<std::size_t>(coords_.rows()); }
  const Eigen::MatrixXd& coordinates() const { return coords_; }

  DistanceMatrix pairwise() const;
  /// n_new x n_train distances from each new curve to each training curve.
  Eigen::MatrixXd distances_to(const fda::FunctionalSample& new_curves) const;
  Eigen::MatrixXd embed(const fda::FunctionalSample& curves) const;

 private:
  SemiMetricSpec spec_;
  fda::Grid grid_;
  Eigen::VectorXd offset_;  // subtracted before mapping (FPCA mean)
  Eigen::MatrixXd map_;     // m x k
  Eigen::MatrixXd coords_;
};

DistanceMatrix distance_matrix(const SemiMetricSpec& spec, const fda::FunctionalSample& sample);

Eigen::MatrixXd distances_to(const SemiMetric& trained, const fda::FunctionalSample& new_curves);

}  // namespace fplm::metric
