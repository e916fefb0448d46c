#include "fplm/semimetric.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

namespace fplm::metric {

namespace {

int parse_int(std::string_view text, std::string_view what) {
  int value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end)
    throw std::invalid_argument("semimetric: bad " + std::string(what) + " '" + std::string(text) + "'");
  return value;
}

double euclidean(const Eigen::MatrixXd& a, Eigen::Index i, const Eigen::MatrixXd& b, Eigen::Index j) {
  double acc = 0.0;
  for (Eigen::Index k = 0; k < a.cols(); ++k) {
    const double d = a(i, k) - b(j, k);
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace

SemiMetricSpec SemiMetricSpec::derivative(int q, SplineConfig spline) {
  SemiMetricSpec s;
  s.kind = Derivative{q};
  s.spline = spline;
  s.validate();
  return s;
}

SemiMetricSpec SemiMetricSpec::fpca(int n_components) {
  SemiMetricSpec s;
  s.kind = FpcaScores{n_components};
  s.validate();
  return s;
}

SemiMetricSpec SemiMetricSpec::parse(std::string_view text) {
  if (text == "l2") return derivative(0);
  const auto colon = text.find(':');
  if (colon == std::string_view::npos)
    throw std::invalid_argument("semimetric: expected deriv:<q>, fpca:<K> or l2, got '" + std::string(text) + "'");
  const auto head = text.substr(0, colon);
  const auto tail = text.substr(colon + 1);
  if (head == "deriv") return derivative(parse_int(tail, "derivative order"));
  if (head == "fpca") return fpca(parse_int(tail, "component count"));
  throw std::invalid_argument("semimetric: unknown kind '" + std::string(head) + "'");
}

std::string SemiMetricSpec::label() const {
  if (const auto* d = std::get_if<Derivative>(&kind)) return d->q == 0 ? "l2" : "deriv:" + std::to_string(d->q);
  return "fpca:" + std::to_string(std::get<FpcaScores>(kind).n_components);
}

void SemiMetricSpec::validate() const {
  if (const auto* d = std::get_if<Derivative>(&kind)) {
    if (d->q < 0) throw std::invalid_argument("semimetric: derivative order must be >= 0");
    if (d->q > 0 && d->q >= spline.order)
      throw std::invalid_argument("semimetric: derivative order must be below the spline order");
  } else if (std::get<FpcaScores>(kind).n_components < 1) {
    throw std::invalid_argument("semimetric: FPCA needs at least one component");
  }
}

bool operator==(const SemiMetricSpec& a, const SemiMetricSpec& b) {
  if (a.kind.index() != b.kind.index()) return false;
  if (const auto* da = std::get_if<Derivative>(&a.kind)) {
    const auto& db = std::get<Derivative>(b.kind);
    return da->q == db.q && a.spline.order == b.spline.order &&
           a.spline.n_interior_knots == b.spline.n_interior_knots;
  }
  return std::get<FpcaScores>(a.kind).n_components == std::get<FpcaScores>(b.kind).n_components;
}

SemiMetric SemiMetric::train(const SemiMetricSpec& spec, const fda::FunctionalSample& training) {
  spec.validate();
  if (training.n() == 0) throw std::invalid_argument("semimetric: empty sample");
  SemiMetric sm;
  sm.spec_ = spec;
  sm.grid_ = training.grid();
  const auto m = static_cast<Eigen::Index>(training.m());
  const Eigen::VectorXd& w = training.grid().weights();
  const Eigen::VectorXd sqrt_w = w.cwiseSqrt();
  sm.offset_ = Eigen::VectorXd::Zero(m);
  if (const auto* f = std::get_if<FpcaScores>(&spec.kind)) {
    const auto limit = std::min(training.n() - 1, training.m());
    if (training.n() < 2 || static_cast<std::size_t>(f->n_components) > limit)
      throw std::invalid_argument("semimetric: fpca:" + std::to_string(f->n_components) +
                                  " incompatible with a sample of " + std::to_string(training.n()) +
                                  " curves on " + std::to_string(training.m()) + " points");
    const auto basis = fda::fpca(training, f->n_components);
    sm.offset_ = basis.mean_curve;
    // score_k = sum_j (x_j - mean_j) w_j phi_kj, scaled by ||phi_k|| (1 up to rounding).
    sm.map_.resize(m, f->n_components);
    for (int k = 0; k < f->n_components; ++k) {
      const Eigen::VectorXd phi = basis.eigenfunctions.row(k).transpose();
      const double norm = std::sqrt(phi.cwiseProduct(w).dot(phi));
      sm.map_.col(k) = w.cwiseProduct(phi) * norm;
    }
  } else {
    const auto& d = std::get<Derivative>(spec.kind);
    if (d.q == 0) {
      sm.map_ = sqrt_w.asDiagonal();
    } else {
      const int knots = spec.spline.n_interior_knots >= 0 ? spec.spline.n_interior_knots
                                                          : fda::default_interior_knots(training.m());
      if (training.m() < static_cast<std::size_t>(spec.spline.order + knots))
        throw std::invalid_argument("semimetric: grid too coarse for the spline configuration");
      // Row j: q-th derivative of the smoothed unit vector e_j.
      const fda::FunctionalSample unit(training.grid(), Eigen::MatrixXd::Identity(m, m));
      const auto rep = fda::fit_bsplines(unit, spec.spline.order, knots);
      sm.map_ = fda::derivative(rep, d.q).values() * sqrt_w.asDiagonal();
    }
  }
  sm.coords_ = sm.embed(training);
  return sm;
}

Eigen::MatrixXd SemiMetric::embed(const fda::FunctionalSample& curves) const {
  if (!curves.grid().same_points(grid_)) throw std::invalid_argument("semimetric: grid mismatch");
  const Eigen::MatrixXd& x = curves.values();
  Eigen::MatrixXd out(x.rows(), map_.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index k = 0; k < map_.cols(); ++k) {
      double acc = 0.0;
      for (Eigen::Index j = 0; j < map_.rows(); ++j) acc += (x(i, j) - offset_(j)) * map_(j, k);
      out(i, k) = acc;
    }
  return out;
}

DistanceMatrix SemiMetric::pairwise() const {
  const Eigen::Index n = coords_.rows();
  Eigen::MatrixXd dist = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = euclidean(coords_, i, coords_, j);
      dist(i, j) = d;
      dist(j, i) = d;
    }
  return {std::move(dist), spec_};
}

Eigen::MatrixXd SemiMetric::distances_to(const fda::FunctionalSample& new_curves) const {
  const Eigen::MatrixXd fresh = embed(new_curves);
  Eigen::MatrixXd dist(fresh.rows(), coords_.rows());
  for (Eigen::Index k = 0; k < fresh.rows(); ++k)
    for (Eigen::Index i = 0; i < coords_.rows(); ++i) dist(k, i) = euclidean(fresh, k, coords_, i);
  return dist;
}

DistanceMatrix distance_matrix(const SemiMetricSpec& spec, const fda::FunctionalSample& sample) {
  return SemiMetric::train(spec, sample).pairwise();
}

Eigen::MatrixXd distances_to(const SemiMetric& trained, const fda::FunctionalSample& new_curves) {
  return trained.distances_to(new_curves);
}

}  // namespace fplm::metric
