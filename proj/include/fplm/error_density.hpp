#pragma once

// Kernel estimate of the regression error density: a Gaussian location
// mixture centred at the residuals, with one common bandwidth or with
// residual-dependent bandwidths tau * (1 + tau_eps * |e_j|).

#include <Eigen/Dense>

#include <utility>
#include <vector>

namespace fplm::density {

enum class BandwidthMode { Global, Localized };

struct ErrorBandwidth {
  BandwidthMode mode = BandwidthMode::Global;
  double scale = 1.0;    // b (global) or tau (localized)
  double tau_eps = 0.0;  // localized only, in [0, 1]

  static ErrorBandwidth global(double b) { return {BandwidthMode::Global, b, 0.0}; }
  static ErrorBandwidth localized(double tau, double tau_eps) { return {BandwidthMode::Localized, tau, tau_eps}; }

  /// Standard deviation of the mixture component centred at `residual`.
  double at(double residual) const {
    return mode == BandwidthMode::Global ? scale : scale * (1.0 + tau_eps * (residual < 0 ? -residual : residual));
  }
  void validate() const;
};

/// Evaluation grid for quantile inversion and density export.
struct EvalGrid {
  double lo = -10.0;
  double hi = 10.0;
  int points = 1001;

  double step() const { return (hi - lo) / (points - 1); }
  double operator[](int k) const { return lo + k * step(); }
};

struct PredictionInterval {
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.0;
};

class KernelErrorDensity {
 public:
  KernelErrorDensity(Eigen::VectorXd residuals, ErrorBandwidth bandwidth);

  static KernelErrorDensity global(Eigen::VectorXd residuals, double b);
  static KernelErrorDensity localized(Eigen::VectorXd residuals, double tau, double tau_eps);

  const Eigen::VectorXd& residuals() const { return residuals_; }
  const Eigen::VectorXd& component_sd() const { return sd_; }
  const ErrorBandwidth& bandwidth() const { return bandwidth_; }

  double density_at(double e) const;
  double cdf_at(double e) const;
  /// Inverse CDF by search on `grid` with linear interpolation between the
  /// bracketing points; p must lie in (0, 1).
  double quantile(double p, const EvalGrid& grid = {}) const;

  /// (e, f(e)) pairs on the grid.
  std::vector<std::pair<double, double>> curve(const EvalGrid& grid = {}) const;

 private:
  Eigen::VectorXd residuals_;
  ErrorBandwidth bandwidth_;
  Eigen::VectorXd sd_;
};

double normal_pdf(double x);
double normal_cdf(double x);

/// sum_i log[(1/(n-1)) sum_{j != i} phi((e_i - e_j) / b_j) / b_j], evaluated
/// with log-sum-exp, so it stays finite when every kernel value underflows;
/// -infinity for non-finite residuals.
double loo_log_likelihood(const Eigen::VectorXd& residuals, const ErrorBandwidth& bandwidth);

PredictionInterval prediction_interval(const KernelErrorDensity& d, double point_forecast, double level,
                                       const EvalGrid& grid = {});

}  // namespace fplm::density
