#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fplm/semimetric.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace fplm;
using metric::SemiMetric;
using metric::SemiMetricSpec;

namespace {

fda::FunctionalSample random_curves(std::size_t n, unsigned seed, double shift = 0.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto g = fda::Grid::uniform(0.0, std::numbers::pi, 100);
  Eigen::MatrixXd v(n, 100);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = u(rng), b = u(rng), c = u(rng);
    for (std::size_t j = 0; j < 100; ++j) {
      const double t = g[j];
      v(i, j) = a * std::cos(2 * t) + b * std::sin(4 * t) + c * (t * t - std::numbers::pi * t) + shift;
    }
  }
  return {g, v};
}

}  // namespace

TEST_CASE("spec parsing and labels") {
  CHECK(SemiMetricSpec::parse("deriv:2").label() == "deriv:2");
  CHECK(SemiMetricSpec::parse("fpca:3").label() == "fpca:3");
  CHECK(SemiMetricSpec::parse("l2").label() == "l2");
  CHECK_THROWS(SemiMetricSpec::parse("deriv:-1"));
  CHECK_THROWS(SemiMetricSpec::parse("fpca:0"));
  CHECK_THROWS(SemiMetricSpec::parse("deriv:x"));
  CHECK_THROWS(SemiMetricSpec::parse("mahalanobis:2"));
  CHECK_THROWS(SemiMetricSpec::parse("deriv:4"));  // cubic splines
}

TEST_CASE("plain L2 distance between 0 and 1 on [0, pi]") {
  const auto g = fda::Grid::uniform(0.0, std::numbers::pi, 100);
  Eigen::MatrixXd v(2, 100);
  v.row(0).setZero();
  v.row(1).setOnes();
  const auto D = metric::distance_matrix(SemiMetricSpec::derivative(0), {g, v});
  CHECK(D.values(0, 1) == doctest::Approx(std::sqrt(std::numbers::pi)).epsilon(1e-12));
  CHECK(D.values(0, 0) == 0.0);
}

TEST_CASE("derivative semimetric ignores constant shifts") {
  const auto g = fda::Grid::uniform(0.0, 1.0, 50);
  Eigen::MatrixXd v(2, 50);
  for (int j = 0; j < 50; ++j) {
    v(0, j) = std::sin(3.0 * g[static_cast<std::size_t>(j)]);
    v(1, j) = v(0, j) + 4.0;
  }
  const auto D = metric::distance_matrix(SemiMetricSpec::derivative(1), {g, v});
  CHECK(D.values(0, 1) < 1e-10);

  const auto x = random_curves(8, 1);
  const auto shifted = random_curves(8, 1, 3.0);
  const auto trained = SemiMetric::train(SemiMetricSpec::derivative(1), x);
  const auto a = trained.pairwise().values;
  const auto b = SemiMetric::train(SemiMetricSpec::derivative(1), shifted).pairwise().values;
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("distance matrices are symmetric with zero diagonal") {
  const auto x = random_curves(20, 2);
  for (const char* text : {"l2", "deriv:1", "deriv:2", "fpca:3"}) {
    const auto D = metric::distance_matrix(SemiMetricSpec::parse(text), x).values;
    CHECK(D == D.transpose());
    CHECK(D.diagonal().cwiseAbs().maxCoeff() == 0.0);
    CHECK(D.minCoeff() >= 0.0);
  }
}

TEST_CASE("triangle inequality and scaling for derivative kinds") {
  const auto x = random_curves(15, 3);
  for (int q : {0, 1, 2}) {
    const auto D = metric::distance_matrix(SemiMetricSpec::derivative(q), x).values;
    for (int i = 0; i < 15; ++i)
      for (int j = 0; j < 15; ++j)
        for (int k = 0; k < 15; ++k) CHECK(D(i, j) <= D(i, k) + D(k, j) + 1e-10);
    const fda::FunctionalSample scaled(x.grid(), 2.5 * x.values());
    const auto Ds = metric::distance_matrix(SemiMetricSpec::derivative(q), scaled).values;
    CHECK((Ds - 2.5 * D).cwiseAbs().maxCoeff() < 1e-10 * std::max(1.0, D.maxCoeff()));
  }
}

TEST_CASE("fpca distances grow with K") {
  const auto x = random_curves(25, 4);
  Eigen::MatrixXd prev = Eigen::MatrixXd::Zero(25, 25);
  for (int K = 1; K <= 6; ++K) {
    const auto D = metric::distance_matrix(SemiMetricSpec::fpca(K), x).values;
    CHECK((D - prev).minCoeff() >= -1e-12);
    prev = D;
  }
}

TEST_CASE("fpca with n-1 components equals the L2 distance of projected curves") {
  const auto x = random_curves(10, 5);
  const auto sm = SemiMetric::train(SemiMetricSpec::fpca(9), x);
  const auto D = sm.pairwise().values;
  const auto basis = fda::fpca(x, 9);
  const Eigen::MatrixXd proj = basis.scores * basis.eigenfunctions;  // centred projections
  const auto& w = x.grid().weights();
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) {
      const Eigen::VectorXd d = (proj.row(i) - proj.row(j)).transpose();
      CHECK(std::abs(D(i, j) - std::sqrt(d.cwiseProduct(w).dot(d))) < 1e-6);
    }
}

TEST_CASE("distances to new curves use the frozen training state") {
  const auto x = random_curves(12, 6);
  const std::vector<std::size_t> pick{3, 7};
  for (const char* text : {"deriv:2", "fpca:3"}) {
    const auto sm = SemiMetric::train(SemiMetricSpec::parse(text), x);
    const auto D = metric::distances_to(sm, x.rows(pick));
    CHECK(D.rows() == 2);
    CHECK(D.cols() == 12);
    CHECK(D(0, 3) == 0.0);
    CHECK(D(1, 7) == 0.0);
    const auto P = sm.pairwise().values;
    CHECK(D.row(0) == P.row(3));
  }
  const auto other = fda::FunctionalSample(fda::Grid::uniform(0.0, 1.0, 100), x.values());
  CHECK_THROWS(SemiMetric::train(SemiMetricSpec::derivative(2), x).distances_to(other));
}

TEST_CASE("incompatible spec and sample") {
  const auto x = random_curves(4, 7);
  CHECK_THROWS(metric::distance_matrix(SemiMetricSpec::fpca(4), x));
  const auto coarse = fda::FunctionalSample(fda::Grid::uniform(0.0, 1.0, 5), Eigen::MatrixXd::Random(3, 5));
  SemiMetricSpec spec = SemiMetricSpec::derivative(2);
  spec.spline.n_interior_knots = 4;
  CHECK_THROWS(metric::distance_matrix(spec, coarse));
}
