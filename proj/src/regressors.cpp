#include "fplm/regressors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fplm::reg {

namespace {

// Fixed left-to-right summation so fitted values and predictions agree to
// the last bit whatever the matrix shapes.
Eigen::VectorXd row_dots(const Eigen::MatrixXd& M, const Eigen::VectorXd& v) {
  Eigen::VectorXd out(M.rows());
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < M.cols(); ++j) acc += M(i, j) * v(j);
    out(i) = acc;
  }
  return out;
}

std::vector<double> row_of(const Eigen::MatrixXd& D, Eigen::Index i) {
  std::vector<double> r(static_cast<std::size_t>(D.cols()));
  for (Eigen::Index j = 0; j < D.cols(); ++j) r[static_cast<std::size_t>(j)] = D(i, j);
  return r;
}

void check_training(const fda::FunctionalSample& X, const fda::FunctionalSample& Z, const Eigen::VectorXd& y) {
  if (X.n() != Z.n() || X.n() != static_cast<std::size_t>(y.size()))
    throw std::invalid_argument("regressors: X, Z and y sizes differ (" + std::to_string(X.n()) + ", " +
                                std::to_string(Z.n()) + ", " + std::to_string(y.size()) + ")");
  if (X.n() < 2) throw std::invalid_argument("regressors: need at least two training curves");
  if (!y.allFinite()) throw std::invalid_argument("regressors: non-finite response");
}

void check_h(double h) {
  if (!(h > 0.0) || !std::isfinite(h)) throw std::invalid_argument("regressors: bandwidth must be positive");
}

Eigen::VectorXd inner_products(const fda::FunctionalSample& X, const Eigen::VectorXd& beta) {
  return row_dots(X.values(), X.grid().weights().cwiseProduct(beta));
}

}  // namespace

double gaussian_kernel(double u) { return std::exp(-0.5 * u * u); }

NwWeights nw_weights(std::span<const double> distances, double h, std::ptrdiff_t exclude) {
  check_h(h);
  const auto n = static_cast<std::ptrdiff_t>(distances.size());
  NwWeights out;
  out.values = Eigen::VectorXd::Zero(n);
  double total = 0.0;
  double nearest = std::numeric_limits<double>::infinity();
  for (std::ptrdiff_t j = 0; j < n; ++j) {
    if (j == exclude) continue;
    const double d = distances[static_cast<std::size_t>(j)];
    if (d < 0.0) throw std::invalid_argument("nw_weights: negative distance");
    if (!std::isfinite(d)) continue;
    nearest = std::min(nearest, d);
    const double k = gaussian_kernel(d / h);
    out.values(j) = k;
    total += k;
  }
  if (!std::isfinite(nearest)) throw std::invalid_argument("nw_weights: no finite distance");
  if (total > 0.0) {
    out.values /= total;
    return out;
  }
  out.fallback = true;
  out.values.setZero();
  double ties = 0.0;
  for (std::ptrdiff_t j = 0; j < n; ++j)
    if (j != exclude && distances[static_cast<std::size_t>(j)] == nearest) {
      out.values(j) = 1.0;
      ties += 1.0;
    }
  out.values /= ties;
  return out;
}

WeightMatrix weight_matrix(const Eigen::MatrixXd& distances, double h, bool leave_one_out) {
  if (distances.rows() != distances.cols()) throw std::invalid_argument("weight_matrix: distances must be square");
  check_h(h);
  WeightMatrix W{Eigen::MatrixXd(distances.rows(), distances.cols()), h, leave_one_out, 0};
  for (Eigen::Index i = 0; i < distances.rows(); ++i) {
    const auto row = row_of(distances, i);
    auto w = nw_weights(row, h, leave_one_out ? i : -1);
    if (w.fallback) ++W.fallback_rows;
    W.values.row(i) = w.values.transpose();
  }
  return W;
}

WeightMatrix cross_weights(const Eigen::MatrixXd& distances, double h, std::span<const std::ptrdiff_t> exclude) {
  if (!exclude.empty() && exclude.size() != static_cast<std::size_t>(distances.rows()))
    throw std::invalid_argument("cross_weights: one exclusion index per new curve expected");
  WeightMatrix W{Eigen::MatrixXd(distances.rows(), distances.cols()), h, !exclude.empty(), 0};
  for (Eigen::Index k = 0; k < distances.rows(); ++k) {
    const auto row = row_of(distances, k);
    auto w = nw_weights(row, h, exclude.empty() ? -1 : exclude[static_cast<std::size_t>(k)]);
    if (w.fallback) ++W.fallback_rows;
    W.values.row(k) = w.values.transpose();
  }
  return W;
}

std::shared_ptr<const TrainingData> make_training(fda::FunctionalSample X, fda::FunctionalSample Z,
                                                  Eigen::VectorXd y, const metric::SemiMetricSpec& spec) {
  check_training(X, Z, y);
  auto metric = metric::SemiMetric::train(spec, Z);
  auto D = metric.pairwise().values;
  return std::make_shared<const TrainingData>(
      TrainingData{std::move(X), std::move(Z), std::move(y), std::move(metric), std::move(D)});
}

FplmFitter::FplmFitter(std::shared_ptr<const TrainingData> training, FplmOptions options)
    : training_(std::move(training)), options_(options) {
  if (!training_) throw std::invalid_argument("FplmFitter: no training data");
  if (options_.n_pc_beta < 0) throw std::invalid_argument("FplmFitter: n_pc_beta must be >= 0");
  if (options_.n_pc_beta == 0 && !(options_.variance_fraction > 0.0 && options_.variance_fraction <= 1.0))
    throw std::invalid_argument("FplmFitter: variance fraction must lie in (0, 1]");
  sqrt_w_ = training_->X.grid().weights().cwiseSqrt();
  const Eigen::MatrixXd A = training_->X.values() * sqrt_w_.asDiagonal();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  Eigen::Index r = 0;
  while (r < s.size() && s(0) > 0.0 && s(r) > 1e-12 * s(0)) ++r;
  P_ = svd.matrixU().leftCols(r) * s.head(r).asDiagonal();
  Q_ = svd.matrixV().leftCols(r);
}

FplmFit FplmFitter::fit(double h) const {
  check_h(h);
  const auto& td = *training_;
  const auto W = weight_matrix(td.distances, h, options_.leave_one_out);
  const Eigen::Index r = P_.cols();

  std::vector<std::string> warnings;
  Eigen::VectorXd c = Eigen::VectorXd::Zero(r);
  int used = 0;
  if (r > 0) {
    const Eigen::MatrixXd Pt = P_ - W.values * P_;
    const Eigen::VectorXd yt = td.y - row_dots(W.values, td.y);
    const Eigen::MatrixXd G = Pt.transpose() * Pt;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G);
    const Eigen::VectorXd& lam = eig.eigenvalues();  // ascending
    const double lam_max = lam(r - 1);

    int wanted = options_.n_pc_beta;
    if (wanted == 0) {
      const double total = std::max(lam.sum(), 0.0);
      double acc = 0.0;
      wanted = 0;
      for (Eigen::Index k = r - 1; k >= 0 && wanted < options_.max_components; --k) {
        acc += std::max(lam(k), 0.0);
        ++wanted;
        if (total <= 0.0 || acc >= options_.variance_fraction * total) break;
      }
    }
    int avail = 0;
    for (Eigen::Index k = r - 1; k >= 0 && avail < wanted; --k) {
      if (!(lam_max > 0.0) || lam(k) <= 1e-10 * lam_max) break;
      ++avail;
    }
    if (avail < wanted)
      warnings.push_back("n_pc_beta reduced from " + std::to_string(wanted) + " to " + std::to_string(avail) +
                         " (singular score cross-product)");
    used = avail;
    const Eigen::VectorXd rhs = Pt.transpose() * yt;
    for (int k = 0; k < used; ++k) {
      const auto col = r - 1 - k;
      const Eigen::VectorXd e = eig.eigenvectors().col(col);
      c += e * (e.dot(rhs) / lam(col));
    }
  }
  Eigen::VectorXd beta = (Q_ * c).cwiseQuotient(sqrt_w_);
  auto out = assemble(std::move(beta), W);
  out.n_pc_beta = used;
  out.warnings = std::move(warnings);
  return out;
}

FplmFit FplmFitter::with_beta(Eigen::VectorXd beta, double h) const {
  if (beta.size() != static_cast<Eigen::Index>(training_->X.m()))
    throw std::invalid_argument("FplmFitter: beta length");
  return assemble(std::move(beta), weight_matrix(training_->distances, h, options_.leave_one_out));
}

FplmFit FplmFitter::assemble(Eigen::VectorXd beta, const WeightMatrix& W) const {
  const auto& td = *training_;
  FplmFit out;
  out.training = training_;
  out.h = W.h;
  out.leave_one_out = options_.leave_one_out;
  out.beta = std::move(beta);
  out.linear_part = inner_products(td.X, out.beta);
  out.partial_residuals = td.y - out.linear_part;
  out.fitted = out.linear_part + row_dots(W.values, out.partial_residuals);
  out.residuals = td.y - out.fitted;
  out.fallback_rows = W.fallback_rows;
  return out;
}

RegressionDraw FplmFitter::fit_at(double h) const {
  auto f = fit(h);
  return {std::move(f.fitted), std::move(f.residuals), std::move(f.beta), f.fallback_rows};
}

FplmFit fit_fplm(const fda::FunctionalSample& X, const fda::FunctionalSample& Z, const Eigen::VectorXd& y,
                 double h, const metric::SemiMetricSpec& spec, FplmOptions options) {
  return FplmFitter(make_training(X, Z, y, spec), options).fit(h);
}

Eigen::VectorXd predict_fplm(const FplmFit& fit, const fda::FunctionalSample& X_new,
                             const fda::FunctionalSample& Z_new, std::span<const std::ptrdiff_t> exclude) {
  if (!fit.training) throw std::invalid_argument("predict_fplm: fit has no training data");
  const auto& td = *fit.training;
  if (!X_new.grid().same_points(td.X.grid())) throw std::invalid_argument("predict_fplm: X grid mismatch");
  if (X_new.n() != Z_new.n()) throw std::invalid_argument("predict_fplm: X_new and Z_new sizes differ");
  const auto W = cross_weights(td.metric.distances_to(Z_new), fit.h, exclude);
  return inner_products(X_new, fit.beta) + row_dots(W.values, fit.partial_residuals);
}

FnpFitter::FnpFitter(std::shared_ptr<const TrainingData> training, bool leave_one_out)
    : training_(std::move(training)), leave_one_out_(leave_one_out) {
  if (!training_) throw std::invalid_argument("FnpFitter: no training data");
}

FnpFit FnpFitter::fit(double h) const {
  const auto W = weight_matrix(training_->distances, h, leave_one_out_);
  FnpFit out;
  out.training = training_;
  out.h = h;
  out.leave_one_out = leave_one_out_;
  out.fitted = row_dots(W.values, training_->y);
  out.residuals = training_->y - out.fitted;
  out.fallback_rows = W.fallback_rows;
  return out;
}

RegressionDraw FnpFitter::fit_at(double h) const {
  auto f = fit(h);
  return {std::move(f.fitted), std::move(f.residuals), Eigen::VectorXd(), f.fallback_rows};
}

FnpFit fit_fnp(const fda::FunctionalSample& Z, const Eigen::VectorXd& y, double h,
               const metric::SemiMetricSpec& spec, bool leave_one_out) {
  return FnpFitter(make_training(Z, Z, y, spec), leave_one_out).fit(h);
}

Eigen::VectorXd predict_fnp(const FnpFit& fit, const fda::FunctionalSample& Z_new,
                            std::span<const std::ptrdiff_t> exclude) {
  if (!fit.training) throw std::invalid_argument("predict_fnp: fit has no training data");
  const auto W = cross_weights(fit.training->metric.distances_to(Z_new), fit.h, exclude);
  return row_dots(W.values, fit.training->y);
}

FpcrFit fit_fpcr(const fda::FunctionalSample& X, const Eigen::VectorXd& y, int n_components) {
  if (X.n() != static_cast<std::size_t>(y.size())) throw std::invalid_argument("fit_fpcr: X and y sizes differ");
  FpcrFit out;
  out.basis = fda::fpca(X, n_components);
  const Eigen::Index n = y.size();
  Eigen::MatrixXd design(n, n_components + 1);
  design.col(0).setOnes();
  design.rightCols(n_components) = out.basis.scores;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < design.cols())
    throw std::runtime_error("fit_fpcr: rank-deficient design (rank " + std::to_string(qr.rank()) + " < " +
                             std::to_string(design.cols()) + ")");
  const Eigen::VectorXd coef = qr.solve(y);
  out.intercept = coef(0);
  out.slopes = coef.tail(n_components);
  out.fitted = design * coef;
  out.residuals = y - out.fitted;
  return out;
}

Eigen::VectorXd predict_fpcr(const FpcrFit& fit, const fda::FunctionalSample& X_new) {
  if (!X_new.grid().same_points(fit.basis.grid)) throw std::invalid_argument("predict_fpcr: grid mismatch");
  const Eigen::MatrixXd scores = fit.basis.project(X_new);
  return (scores * fit.slopes).array() + fit.intercept;
}

}  // namespace fplm::reg
