#include "fplm/fda.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fplm::fda {

namespace {

Eigen::VectorXd trapezoid_weights(const std::vector<double>& t) {
  const auto m = static_cast<Eigen::Index>(t.size());
  Eigen::VectorXd w(m);
  w(0) = 0.5 * (t[1] - t[0]);
  w(m - 1) = 0.5 * (t[m - 1] - t[m - 2]);
  for (Eigen::Index j = 1; j + 1 < m; ++j) w(j) = 0.5 * (t[j + 1] - t[j - 1]);
  return w;
}

// Type-7 quantile of sorted data.
double sorted_quantile(const std::vector<double>& v, double p) {
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

// Index of the knot span containing x, restricted to [order-1, p-1].
Eigen::Index find_span(const Eigen::VectorXd& knots, int order, double x) {
  const Eigen::Index p = knots.size() - order;
  if (x >= knots(p)) {
    Eigen::Index s = p - 1;
    while (s > order - 1 && knots(s) == knots(s + 1)) --s;
    return s;
  }
  const auto first = knots.data() + order - 1;
  const auto last = knots.data() + p + 1;
  auto it = std::upper_bound(first, last, x);
  Eigen::Index s = (it - knots.data()) - 1;
  return std::clamp<Eigen::Index>(s, order - 1, p - 1);
}

}  // namespace

Grid::Grid(std::vector<double> points)
    : Grid(points, points.empty() ? 0.0 : points.front(), points.empty() ? 0.0 : points.back()) {}

Grid::Grid(std::vector<double> points, double support_lo, double support_hi)
    : points_(std::move(points)), support_lo_(support_lo), support_hi_(support_hi) {
  if (points_.size() < 4) throw std::invalid_argument("Grid: at least 4 points required");
  for (std::size_t j = 0; j < points_.size(); ++j) {
    if (!std::isfinite(points_[j])) throw std::invalid_argument("Grid: non-finite point");
    if (j > 0 && !(points_[j] > points_[j - 1]))
      throw std::invalid_argument("Grid: points must be strictly increasing");
  }
  if (support_lo_ > points_.front() || points_.back() > support_hi_)
    throw std::invalid_argument("Grid: points outside the support");
  weights_ = trapezoid_weights(points_);
}

Grid Grid::uniform(double lo, double hi, std::size_t m) {
  if (m < 4) throw std::invalid_argument("Grid::uniform: at least 4 points required");
  std::vector<double> t(m);
  const double step = (hi - lo) / static_cast<double>(m - 1);
  for (std::size_t j = 0; j < m; ++j) t[j] = lo + step * static_cast<double>(j);
  t.back() = hi;
  return Grid(std::move(t), lo, hi);
}

bool Grid::same_points(const Grid& other, double tol) const {
  if (other.size() != size()) return false;
  for (std::size_t j = 0; j < size(); ++j) {
    const double scale = std::max({1.0, std::abs(points_[j]), std::abs(other.points_[j])});
    if (std::abs(points_[j] - other.points_[j]) > tol * scale) return false;
  }
  return true;
}

FunctionalSample::FunctionalSample(Grid grid, Eigen::MatrixXd values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (static_cast<std::size_t>(values_.cols()) != grid_.size())
    throw std::invalid_argument("FunctionalSample: column count " + std::to_string(values_.cols()) +
                                " does not match grid size " + std::to_string(grid_.size()));
  if (!values_.allFinite()) throw std::invalid_argument("FunctionalSample: non-finite entries");
}

FunctionalSample FunctionalSample::rows(std::span<const std::size_t> idx) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), values_.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] >= n()) throw std::out_of_range("FunctionalSample::rows: index out of range");
    out.row(static_cast<Eigen::Index>(k)) = values_.row(static_cast<Eigen::Index>(idx[k]));
  }
  return {grid_, std::move(out)};
}

FunctionalSample FunctionalSample::head(std::size_t count) const {
  if (count > n()) throw std::out_of_range("FunctionalSample::head: count exceeds sample size");
  return {grid_, values_.topRows(static_cast<Eigen::Index>(count))};
}

FunctionalSample FunctionalSample::tail_from(std::size_t first) const {
  if (first > n()) throw std::out_of_range("FunctionalSample::tail_from: start exceeds sample size");
  return {grid_, values_.bottomRows(static_cast<Eigen::Index>(n() - first))};
}

Eigen::MatrixXd bspline_basis(const Eigen::VectorXd& knots, int order, std::span<const double> x) {
  const Eigen::Index p = knots.size() - order;
  if (order < 1 || p < 1) throw std::invalid_argument("bspline_basis: bad knot vector");
  const double lo = knots(order - 1);
  const double hi = knots(p);
  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(x.size()), p);
  std::vector<double> left(order), right(order), vals(order);
  for (std::size_t r = 0; r < x.size(); ++r) {
    const double xv = x[r];
    if (xv < lo - 1e-12 * std::max(1.0, std::abs(lo)) || xv > hi + 1e-12 * std::max(1.0, std::abs(hi)))
      throw std::invalid_argument("bspline_basis: evaluation point outside the knot range");
    const double xc = std::clamp(xv, lo, hi);
    const Eigen::Index span = find_span(knots, order, xc);
    // Cox-de Boor triangle for the `order` nonzero functions on this span.
    vals[0] = 1.0;
    for (int j = 1; j < order; ++j) {
      left[j] = xc - knots(span + 1 - j);
      right[j] = knots(span + j) - xc;
      double saved = 0.0;
      for (int k = 0; k < j; ++k) {
        const double denom = right[k + 1] + left[j - k];
        const double temp = denom == 0.0 ? 0.0 : vals[k] / denom;
        vals[k] = saved + right[k + 1] * temp;
        saved = left[j - k] * temp;
      }
      vals[j] = saved;
    }
    for (int k = 0; k < order; ++k) basis(static_cast<Eigen::Index>(r), span - order + 1 + k) = vals[k];
  }
  return basis;
}

int default_interior_knots(std::size_t m) { return static_cast<int>(std::min<std::size_t>(20, m / 4)); }

Eigen::VectorXd quantile_knot_vector(const Grid& grid, int order, int n_interior_knots) {
  const std::vector<double>& t = grid.points();
  Eigen::VectorXd knots(2 * order + n_interior_knots);
  for (int k = 0; k < order; ++k) {
    knots(k) = t.front();
    knots(order + n_interior_knots + k) = t.back();
  }
  for (int k = 0; k < n_interior_knots; ++k)
    knots(order + k) = sorted_quantile(t, static_cast<double>(k + 1) / (n_interior_knots + 1));
  return knots;
}

FunctionalSample BSplineRep::evaluate() const {
  const Eigen::MatrixXd basis = bspline_basis(knots, order, grid.points());
  return {grid, coefs * basis.transpose()};
}

BSplineRep fit_bsplines(const FunctionalSample& sample, int order, int n_interior_knots) {
  if (order < 2) throw std::invalid_argument("fit_bsplines: order must be >= 2");
  if (n_interior_knots < 0) throw std::invalid_argument("fit_bsplines: negative interior knot count");
  const std::size_t m = sample.m();
  const auto p = static_cast<std::size_t>(order + n_interior_knots);
  if (m < p)
    throw std::invalid_argument("fit_bsplines: " + std::to_string(p) + " basis functions exceed " +
                                std::to_string(m) + " grid points");
  BSplineRep rep;
  rep.order = order;
  rep.grid = sample.grid();
  rep.knots = quantile_knot_vector(sample.grid(), order, n_interior_knots);
  const Eigen::MatrixXd basis = bspline_basis(rep.knots, order, sample.grid().points());
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(basis);
  if (qr.rank() < basis.cols())
    throw std::invalid_argument("fit_bsplines: degenerate design (some knot spans hold no grid points)");
  rep.coefs = qr.solve(sample.values().transpose()).transpose();
  return rep;
}

BSplineRep differentiate(const BSplineRep& rep, int q) {
  if (q < 0) throw std::invalid_argument("differentiate: negative order");
  if (q >= rep.order)
    throw std::invalid_argument("differentiate: derivative order " + std::to_string(q) +
                                " must be below spline order " + std::to_string(rep.order));
  BSplineRep out = rep;
  for (int step = 0; step < q; ++step) {
    const int k = out.order;
    const Eigen::Index p = out.coefs.cols();
    Eigen::MatrixXd d(out.coefs.rows(), p - 1);
    for (Eigen::Index i = 0; i + 1 < p; ++i) {
      const double span = out.knots(i + k) - out.knots(i + 1);
      if (span == 0.0)
        d.col(i).setZero();
      else
        d.col(i) = (k - 1) * (out.coefs.col(i + 1) - out.coefs.col(i)) / span;
    }
    out.coefs = std::move(d);
    out.knots = out.knots.segment(1, out.knots.size() - 2).eval();
    out.order = k - 1;
  }
  return out;
}

FunctionalSample derivative(const BSplineRep& rep, int q) {
  if (q < 1) throw std::invalid_argument("derivative: q must be >= 1");
  return differentiate(rep, q).evaluate();
}

Eigen::MatrixXd FpcaResult::project(const FunctionalSample& curves) const {
  if (!curves.grid().same_points(grid)) throw std::invalid_argument("FpcaResult::project: grid mismatch");
  const Eigen::MatrixXd centred = curves.values().rowwise() - mean_curve.transpose();
  return centred * grid.weights().asDiagonal() * eigenfunctions.transpose();
}

Eigen::MatrixXd FpcaResult::reconstruct(const Eigen::MatrixXd& s) const {
  Eigen::MatrixXd out = s * eigenfunctions;
  out.rowwise() += mean_curve.transpose();
  return out;
}

FpcaResult fpca(const FunctionalSample& sample, int n_components) {
  const auto n = static_cast<Eigen::Index>(sample.n());
  const auto m = static_cast<Eigen::Index>(sample.m());
  if (n_components < 1 || n_components > std::min(n - 1, m))
    throw std::invalid_argument("fpca: K=" + std::to_string(n_components) + " outside [1, min(n-1, m)]");
  const Eigen::VectorXd& w = sample.grid().weights();

  FpcaResult out;
  out.grid = sample.grid();
  out.mean_curve = sample.values().colwise().mean().transpose();
  const Eigen::MatrixXd centred = sample.values().rowwise() - out.mean_curve.transpose();
  const Eigen::MatrixXd gram = centred * w.asDiagonal() * centred.transpose();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success) throw std::runtime_error("fpca: eigendecomposition failed");

  const Eigen::Index K = n_components;
  out.eigenvalues.resize(K);
  out.eigenfunctions.resize(K, m);
  const double top = std::max(eig.eigenvalues()(n - 1), 0.0);
  const double tol = 1e-12 * std::max(top, 1e-300);
  Eigen::Index filled = 0;
  for (Eigen::Index k = 0; k < K; ++k) {
    const double lambda = eig.eigenvalues()(n - 1 - k);
    if (lambda <= tol || top == 0.0) break;
    out.eigenvalues(k) = lambda / static_cast<double>(n);
    out.eigenfunctions.row(k) = (centred.transpose() * eig.eigenvectors().col(n - 1 - k)).transpose() / std::sqrt(lambda);
    ++filled;
  }
  // Null directions: complete the basis by weighted Gram-Schmidt on grid indicators.
  for (Eigen::Index j = 0; filled < K && j < m; ++j) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(m);
    v(j) = 1.0;
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index k = 0; k < filled; ++k) {
        const Eigen::VectorXd phi = out.eigenfunctions.row(k).transpose();
        v -= (phi.cwiseProduct(w).dot(v)) * phi;
      }
    const double norm = std::sqrt(v.cwiseProduct(w).dot(v));
    if (norm < 1e-8) continue;
    out.eigenvalues(filled) = 0.0;
    out.eigenfunctions.row(filled) = (v / norm).transpose();
    ++filled;
  }
  for (Eigen::Index k = 0; k < K; ++k) {
    Eigen::Index arg = 0;
    out.eigenfunctions.row(k).cwiseAbs().maxCoeff(&arg);
    if (out.eigenfunctions(k, arg) < 0.0) out.eigenfunctions.row(k) *= -1.0;
  }
  out.scores = centred * w.asDiagonal() * out.eigenfunctions.transpose();
  return out;
}

double inner_product(std::span<const double> x, std::span<const double> beta, const Grid& grid) {
  if (x.size() != grid.size() || beta.size() != grid.size())
    throw std::invalid_argument("inner_product: curve length does not match the grid");
  const Eigen::VectorXd& w = grid.weights();
  double acc = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) acc += w(static_cast<Eigen::Index>(j)) * x[j] * beta[j];
  return acc;
}

double inner_product(const Eigen::VectorXd& x, const Eigen::VectorXd& beta, const Grid& grid) {
  return inner_product(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                       std::span<const double>(beta.data(), static_cast<std::size_t>(beta.size())), grid);
}

}  // namespace fplm::fda
