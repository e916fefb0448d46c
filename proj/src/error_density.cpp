#include "fplm/error_density.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace fplm::density {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

}  // namespace

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

void ErrorBandwidth::validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw std::invalid_argument("error bandwidth must be positive");
  if (mode == BandwidthMode::Localized && !(tau_eps >= 0.0 && tau_eps <= 1.0))
    throw std::invalid_argument("tau_eps must lie in [0, 1]");
}

KernelErrorDensity::KernelErrorDensity(Eigen::VectorXd residuals, ErrorBandwidth bandwidth)
    : residuals_(std::move(residuals)), bandwidth_(bandwidth) {
  bandwidth_.validate();
  if (residuals_.size() == 0) throw std::invalid_argument("error density needs at least one residual");
  if (!residuals_.allFinite()) throw std::invalid_argument("error density: non-finite residual");
  sd_.resize(residuals_.size());
  for (Eigen::Index j = 0; j < residuals_.size(); ++j) sd_(j) = bandwidth_.at(residuals_(j));
}

KernelErrorDensity KernelErrorDensity::global(Eigen::VectorXd residuals, double b) {
  return {std::move(residuals), ErrorBandwidth::global(b)};
}

KernelErrorDensity KernelErrorDensity::localized(Eigen::VectorXd residuals, double tau, double tau_eps) {
  return {std::move(residuals), ErrorBandwidth::localized(tau, tau_eps)};
}

double KernelErrorDensity::density_at(double e) const {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < residuals_.size(); ++j) acc += normal_pdf((e - residuals_(j)) / sd_(j)) / sd_(j);
  return acc / static_cast<double>(residuals_.size());
}

double KernelErrorDensity::cdf_at(double e) const {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < residuals_.size(); ++j) acc += normal_cdf((e - residuals_(j)) / sd_(j));
  return acc / static_cast<double>(residuals_.size());
}

double KernelErrorDensity::quantile(double p, const EvalGrid& grid) const {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("quantile: p must lie in (0, 1), got " + std::to_string(p));
  double prev_x = grid[0];
  double prev_f = cdf_at(prev_x);
  if (prev_f >= p) return prev_x;
  for (int k = 1; k < grid.points; ++k) {
    const double x = grid[k];
    const double f = cdf_at(x);
    if (f >= p) return f > prev_f ? prev_x + (p - prev_f) / (f - prev_f) * (x - prev_x) : x;
    prev_x = x;
    prev_f = f;
  }
  return prev_x;
}

std::vector<std::pair<double, double>> KernelErrorDensity::curve(const EvalGrid& grid) const {
  std::vector<std::pair<double, double>> out;
  out.reserve(static_cast<std::size_t>(grid.points));
  for (int k = 0; k < grid.points; ++k) out.emplace_back(grid[k], density_at(grid[k]));
  return out;
}

double loo_log_likelihood(const Eigen::VectorXd& residuals, const ErrorBandwidth& bandwidth) {
  bandwidth.validate();
  const Eigen::Index n = residuals.size();
  if (n < 2) throw std::invalid_argument("loo_log_likelihood needs at least two residuals");
  Eigen::VectorXd sd(n), log_sd(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    sd(j) = bandwidth.at(residuals(j));
    log_sd(j) = std::log(sd(j));
  }
  const double log_norm = std::log(static_cast<double>(n - 1)) + kLogSqrt2Pi;
  std::vector<double> terms(static_cast<std::size_t>(n));
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double u = (residuals(i) - residuals(j)) / sd(j);
      const double t = -0.5 * u * u - log_sd(j);
      terms[static_cast<std::size_t>(j)] = t;
      if (t > top) top = t;
    }
    if (!std::isfinite(top)) return -std::numeric_limits<double>::infinity();
    double s = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) s += std::exp(terms[static_cast<std::size_t>(j)] - top);
    total += top + std::log(s) - log_norm;
  }
  return std::isfinite(total) ? total : -std::numeric_limits<double>::infinity();
}

PredictionInterval prediction_interval(const KernelErrorDensity& d, double point_forecast, double level,
                                       const EvalGrid& grid) {
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("prediction interval level must lie in (0, 1)");
  return {point_forecast + d.quantile((1.0 - level) / 2.0, grid),
          point_forecast + d.quantile((1.0 + level) / 2.0, grid), level};
}

}  // namespace fplm::density
