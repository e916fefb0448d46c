#pragma once

// Regression estimators with a scalar response: the functional partial linear
// model (linear in X, kernel smoother in Z), the functional Nadaraya-Watson
// smoother, and functional principal component regression.

#include "fplm/fda.hpp"
#include "fplm/semimetric.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fplm::reg {

/// exp(-u^2 / 2); the normalising constant cancels in the weights.
double gaussian_kernel(double u);

struct NwWeights {
  Eigen::VectorXd values;
  bool fallback = false;  // every kernel value underflowed; uniform over the nearest curves
};

/// Nadaraya-Watson weights for one row of distances. `exclude` (>= 0) gets
/// weight zero, which gives leave-one-out weights.
NwWeights nw_weights(std::span<const double> distances, double h, std::ptrdiff_t exclude = -1);

struct WeightMatrix {
  Eigen::MatrixXd values;
  double h = 0.0;
  bool leave_one_out = false;
  std::size_t fallback_rows = 0;
};

/// Square weight matrix over a training distance matrix.
WeightMatrix weight_matrix(const Eigen::MatrixXd& distances, double h, bool leave_one_out);

/// Rows for new curves; exclude[k] >= 0 drops that training curve from row k.
WeightMatrix cross_weights(const Eigen::MatrixXd& distances, double h,
                           std::span<const std::ptrdiff_t> exclude = {});

/// Training triplets together with the semi-metric frozen on Z.
struct TrainingData {
  fda::FunctionalSample X;
  fda::FunctionalSample Z;
  Eigen::VectorXd y;
  metric::SemiMetric metric;
  Eigen::MatrixXd distances;
};

std::shared_ptr<const TrainingData> make_training(fda::FunctionalSample X, fda::FunctionalSample Z,
                                                  Eigen::VectorXd y, const metric::SemiMetricSpec& spec);

/// What a bandwidth sampler needs from a model at a given h.
struct RegressionDraw {
  Eigen::VectorXd fitted;
  Eigen::VectorXd residuals;
  Eigen::VectorXd beta;  // empty for purely nonparametric models
  std::size_t fallback_rows = 0;
};

class BandwidthRegression {
 public:
  virtual ~BandwidthRegression() = default;
  virtual std::size_t n() const = 0;
  virtual RegressionDraw fit_at(double h) const = 0;
};

struct FplmOptions {
  int n_pc_beta = 3;               // 0: smallest count reaching variance_fraction
  double variance_fraction = 0.99;
  int max_components = 10;
  bool leave_one_out = true;       // training weights exclude the diagonal
};

struct FplmFit {
  std::shared_ptr<const TrainingData> training;
  double h = 0.0;
  int n_pc_beta = 0;
  bool leave_one_out = true;
  Eigen::VectorXd beta;               // beta-hat on the grid
  Eigen::VectorXd linear_part;        // <X_i, beta-hat>
  Eigen::VectorXd partial_residuals;  // y_i - <X_i, beta-hat>, smoothed by the NW stage
  Eigen::VectorXd fitted;
  Eigen::VectorXd residuals;
  std::size_t fallback_rows = 0;
  std::vector<std::string> warnings;
};

/// Repeated FPLM fits over one training set.
///
/// X diag(sqrt(w)) is factorised once as P Q^T (thin SVD, numerical rank r),
/// so each bandwidth only needs the n x r matrix (I - W) P and an r x r
/// eigenproblem instead of an SVD of the n x m partial residual curves.
class FplmFitter final : public BandwidthRegression {
 public:
  FplmFitter(std::shared_ptr<const TrainingData> training, FplmOptions options = {});

  std::size_t n() const override { return static_cast<std::size_t>(training_->y.size()); }
  RegressionDraw fit_at(double h) const override;

  FplmFit fit(double h) const;
  /// Fit with a given beta (e.g. an ergodic average or zero); only m-hat is estimated.
  FplmFit with_beta(Eigen::VectorXd beta, double h) const;

  const TrainingData& training() const { return *training_; }
  const FplmOptions& options() const { return options_; }

 private:
  FplmFit assemble(Eigen::VectorXd beta, const WeightMatrix& W) const;

  std::shared_ptr<const TrainingData> training_;
  FplmOptions options_;
  Eigen::VectorXd sqrt_w_;
  Eigen::MatrixXd P_;  // n x r
  Eigen::MatrixXd Q_;  // m x r
};

FplmFit fit_fplm(const fda::FunctionalSample& X, const fda::FunctionalSample& Z, const Eigen::VectorXd& y,
                 double h, const metric::SemiMetricSpec& spec, FplmOptions options = {});

/// <X_new, beta-hat> + sum_i w_h(Z_new, Z_i) (y_i - <X_i, beta-hat>).
Eigen::VectorXd predict_fplm(const FplmFit& fit, const fda::FunctionalSample& X_new,
                             const fda::FunctionalSample& Z_new, std::span<const std::ptrdiff_t> exclude = {});

struct FnpFit {
  std::shared_ptr<const TrainingData> training;
  double h = 0.0;
  bool leave_one_out = true;
  Eigen::VectorXd fitted;
  Eigen::VectorXd residuals;
  std::size_t fallback_rows = 0;
};

class FnpFitter final : public BandwidthRegression {
 public:
  explicit FnpFitter(std::shared_ptr<const TrainingData> training, bool leave_one_out = true);

  std::size_t n() const override { return static_cast<std::size_t>(training_->y.size()); }
  RegressionDraw fit_at(double h) const override;
  FnpFit fit(double h) const;

 private:
  std::shared_ptr<const TrainingData> training_;
  bool leave_one_out_;
};

FnpFit fit_fnp(const fda::FunctionalSample& Z, const Eigen::VectorXd& y, double h,
               const metric::SemiMetricSpec& spec, bool leave_one_out = true);

Eigen::VectorXd predict_fnp(const FnpFit& fit, const fda::FunctionalSample& Z_new,
                            std::span<const std::ptrdiff_t> exclude = {});

struct FpcrFit {
  fda::FpcaResult basis;
  double intercept = 0.0;
  Eigen::VectorXd slopes;  // one per retained component
  Eigen::VectorXd fitted;
  Eigen::VectorXd residuals;
};

FpcrFit fit_fpcr(const fda::FunctionalSample& X, const Eigen::VectorXd& y, int n_components = 3);

Eigen::VectorXd predict_fpcr(const FpcrFit& fit, const fda::FunctionalSample& X_new);

}  // namespace fplm::reg
