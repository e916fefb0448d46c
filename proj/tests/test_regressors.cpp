#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fplm/regressors.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

using namespace fplm;
using metric::SemiMetricSpec;

namespace {

struct Data {
  fda::FunctionalSample X;
  Eigen::VectorXd y;
  Eigen::VectorXd g;
};

Data simulate(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z;
  const auto grid = fda::Grid::uniform(0.0, std::numbers::pi, 100);
  Eigen::MatrixXd v(n, 100);
  Eigen::VectorXd y(n), g(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = u(rng), b = u(rng), c = u(rng);
    for (std::size_t j = 0; j < 100; ++j) {
      const double t = grid[j];
      v(i, j) = a * std::cos(2 * t) + b * std::sin(4 * t) + c * (t * t - std::numbers::pi * t + 2 * std::numbers::pi * std::numbers::pi / 9);
    }
    g(i) = 10 * (a * a - b * b);
    y(i) = g(i) + 0.5 * z(rng);
  }
  return {{grid, v}, y, g};
}

bool sums_to_y(const Eigen::VectorXd& fitted, const Eigen::VectorXd& res, const Eigen::VectorXd& y) {
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (std::abs(fitted(i) + res(i) - y(i)) > 4e-16 * std::max(1.0, std::abs(y(i)))) return false;
  return true;
}

}  // namespace

TEST_CASE("nw weights for simple rows") {
  const std::vector<double> d{0.0, 1.0, 2.0};
  const auto w = reg::nw_weights(d, 1.0);
  CHECK(w.values(0) == doctest::Approx(0.5741).epsilon(1e-4 / 0.5741));
  CHECK(std::abs(w.values(0) - 0.5741) < 1e-4);
  CHECK(std::abs(w.values(1) - 0.3482) < 1e-4);
  CHECK(std::abs(w.values(2) - 0.0777) < 1e-4);
  CHECK_FALSE(w.fallback);

  const std::vector<double> same(5, 0.7);
  const auto u = reg::nw_weights(same, 0.3);
  for (int i = 0; i < 5; ++i) CHECK(u.values(i) == doctest::Approx(0.2));

  const auto flat = reg::nw_weights(d, 1e12);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(flat.values(i) - 1.0 / 3.0) < 1e-9);

  CHECK_THROWS(reg::nw_weights(d, 0.0));
  CHECK_THROWS(reg::nw_weights(d, -1.0));
}

TEST_CASE("nw weights fall back to the nearest curves on underflow") {
  const std::vector<double> d{50.0, 60.0, 50.0, 70.0};
  const auto w = reg::nw_weights(d, 0.01);
  CHECK(w.fallback);
  CHECK(w.values(0) == 0.5);
  CHECK(w.values(2) == 0.5);
  CHECK(w.values(1) == 0.0);
  const auto loo = reg::nw_weights(d, 0.01, 0);
  CHECK(loo.values(2) == 1.0);
}

TEST_CASE("nw weights are scale invariant and rows sum to one") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> d(30), cd(30);
    const double c = 0.1 + u(rng);
    const double h = 0.2 + u(rng);
    for (int j = 0; j < 30; ++j) {
      d[j] = u(rng);
      cd[j] = c * d[j];
    }
    const auto a = reg::nw_weights(d, h);
    const auto b = reg::nw_weights(cd, c * h);
    CHECK((a.values - b.values).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(std::abs(a.values.sum() - 1.0) < 1e-12);
    CHECK(a.values.minCoeff() >= 0.0);
  }
  const auto data = simulate(40, 1);
  const auto D = metric::distance_matrix(SemiMetricSpec::derivative(2), data.X).values;
  for (bool loo : {false, true})
    for (double h : {1e-3, 0.05, 0.5, 5.0}) {
      const auto W = reg::weight_matrix(D, h, loo);
      CHECK((W.values.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
      CHECK(W.values.minCoeff() >= 0.0);
      if (loo) CHECK(W.values.diagonal().cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("fplm on a constant response") {
  const auto data = simulate(30, 2);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(30, 4.25);
  for (bool loo : {false, true}) {
    reg::FplmOptions opt;
    opt.leave_one_out = loo;
    const auto fit = reg::fit_fplm(data.X, data.X, y, 0.3, SemiMetricSpec::derivative(2), opt);
    CHECK(fit.beta.cwiseAbs().maxCoeff() < 1e-9);
    CHECK((fit.fitted.array() - 4.25).abs().maxCoeff() < 1e-10);
    CHECK(fit.residuals.cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("fplm recovers a response linear in one principal score") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z;
  const auto grid = fda::Grid::uniform(0.0, 1.0, 50);
  Eigen::MatrixXd v(4, 50);
  for (int i = 0; i < 4; ++i) {
    const double a = z(rng), b = z(rng);
    for (int j = 0; j < 50; ++j) v(i, j) = a * std::sin(std::numbers::pi * grid[j]) + b * grid[j];
  }
  const fda::FunctionalSample X(grid, v);
  const auto pcs = fda::fpca(X, 1);
  const Eigen::VectorXd y = 2.0 * pcs.scores.col(0);
  const auto fit = reg::fit_fplm(X, X, y, 1e6, SemiMetricSpec::derivative(0));
  CHECK(fit.residuals.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("fplm fitted values and predictions agree") {
  const auto data = simulate(50, 4);
  const auto spec = SemiMetricSpec::derivative(2);
  reg::FplmFitter fitter(reg::make_training(data.X, data.X, data.y, spec));
  const auto fit = fitter.fit(0.4);
  CHECK(fit.n_pc_beta == 3);
  CHECK(fit.warnings.empty());
  CHECK(sums_to_y(fit.fitted, fit.residuals, data.y));
  CHECK(fit.residuals.allFinite());

  std::vector<std::ptrdiff_t> self(50);
  std::iota(self.begin(), self.end(), 0);
  const auto again = reg::predict_fplm(fit, data.X, data.X, self);
  CHECK((again - fit.fitted).cwiseAbs().maxCoeff() < 1e-10);

  // A single duplicated training triplet.
  const std::vector<std::size_t> pick{17};
  const std::vector<std::ptrdiff_t> ex{17};
  const auto one = reg::predict_fplm(fit, data.X.rows(pick), data.X.rows(pick), ex);
  CHECK(std::abs(one(0) - fit.fitted(17)) < 1e-10);

  // Tiny bandwidth: the nearest training curve (itself) takes all the weight.
  const auto sharp = fitter.with_beta(fit.beta, 1e-8);
  const auto p = reg::predict_fplm(sharp, data.X.rows(pick), data.X.rows(pick));
  CHECK(std::abs(p(0) - (sharp.linear_part(17) + data.y(17) - sharp.linear_part(17))) < 1e-10);
}

TEST_CASE("fplm with beta forced to zero is the kernel smoother") {
  const auto data = simulate(40, 6);
  const auto spec = SemiMetricSpec::derivative(2);
  reg::FplmFitter fitter(reg::make_training(data.X, data.X, data.y, spec));
  const auto zero = fitter.with_beta(Eigen::VectorXd::Zero(100), 0.3);
  const auto fnp = reg::fit_fnp(data.X, data.y, 0.3, spec);
  const auto fresh = simulate(10, 7);
  const auto a = reg::predict_fplm(zero, fresh.X, fresh.X);
  const auto b = reg::predict_fnp(fnp, fresh.X);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((zero.fitted - fnp.fitted).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fplm does not depend on the training order") {
  const auto data = simulate(30, 8);
  std::vector<std::size_t> perm(30);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(1);
  std::shuffle(perm.begin(), perm.end(), rng);
  Eigen::VectorXd yp(30);
  for (int i = 0; i < 30; ++i) yp(i) = data.y(static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)]));
  const auto spec = SemiMetricSpec::derivative(2);
  const auto a = reg::fit_fplm(data.X, data.X, data.y, 0.5, spec);
  const auto b = reg::fit_fplm(data.X.rows(perm), data.X.rows(perm), yp, 0.5, spec);
  for (int i = 0; i < 30; ++i)
    CHECK(std::abs(b.fitted(i) - a.fitted(static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)]))) < 1e-9);
}

TEST_CASE("fplm reduces components on a rank-deficient design") {
  const auto grid = fda::Grid::uniform(0.0, 1.0, 40);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> z;
  Eigen::MatrixXd v(20, 40);
  Eigen::VectorXd y(20);
  for (int i = 0; i < 20; ++i) {
    const double a = z(rng), b = z(rng);
    for (int j = 0; j < 40; ++j) v(i, j) = a + b * grid[j];
    y(i) = a + z(rng);
  }
  const fda::FunctionalSample X(grid, v);
  reg::FplmOptions opt;
  opt.n_pc_beta = 4;
  const auto fit = reg::fit_fplm(X, X, y, 0.5, SemiMetricSpec::derivative(0), opt);
  CHECK(fit.n_pc_beta == 2);
  CHECK(fit.warnings.size() == 1);
  CHECK(fit.residuals.allFinite());
}

TEST_CASE("fplm variance rule picks a component count") {
  const auto data = simulate(40, 9);
  reg::FplmOptions opt;
  opt.n_pc_beta = 0;
  const auto fit = reg::fit_fplm(data.X, data.X, data.y, 0.5, SemiMetricSpec::derivative(2), opt);
  CHECK(fit.n_pc_beta >= 1);
  CHECK(fit.n_pc_beta <= 3);
}

TEST_CASE("fnp smoother") {
  const auto data = simulate(25, 10);
  const auto spec = SemiMetricSpec::derivative(2);
  const Eigen::VectorXd c = Eigen::VectorXd::Constant(25, -1.5);
  const auto flat = reg::fit_fnp(data.X, c, 0.2, spec);
  CHECK((flat.fitted.array() + 1.5).abs().maxCoeff() < 1e-12);

  const auto wide = reg::fit_fnp(data.X, data.y, 1e12, spec, false);
  CHECK((wide.fitted.array() - data.y.mean()).abs().maxCoeff() < 1e-9);

  const auto fit = reg::fit_fnp(data.X, data.y, 0.3, spec);
  CHECK(sums_to_y(fit.fitted, fit.residuals, data.y));
  CHECK_THROWS(reg::fit_fnp(data.X, data.y, 0.0, spec));
  CHECK_THROWS(reg::fit_fnp(data.X, Eigen::VectorXd::Zero(24), 0.3, spec));
}

TEST_CASE("fpcr") {
  const auto data = simulate(30, 11);
  const Eigen::VectorXd c = Eigen::VectorXd::Constant(30, 7.0);
  const auto flat = reg::fit_fpcr(data.X, c, 3);
  CHECK(flat.intercept == doctest::Approx(7.0).epsilon(1e-12));
  CHECK(flat.slopes.cwiseAbs().maxCoeff() < 1e-10);

  const auto pcs = fda::fpca(data.X, 3);
  const Eigen::VectorXd y = 2.0 * pcs.scores.col(0);
  const auto fit = reg::fit_fpcr(data.X, y, 3);
  CHECK(std::abs(fit.slopes(0) - 2.0) < 1e-8);
  CHECK(sums_to_y(fit.fitted, fit.residuals, y));
  const auto pred = reg::predict_fpcr(fit, data.X);
  CHECK((pred - fit.fitted).cwiseAbs().maxCoeff() < 1e-10);

  const fda::FunctionalSample same(data.X.grid(), data.X.values().row(0).replicate(30, 1));
  CHECK_THROWS(reg::fit_fpcr(same, data.y, 2));
}

TEST_CASE("prediction rejects mismatched grids") {
  const auto data = simulate(20, 12);
  const auto fit = reg::fit_fplm(data.X, data.X, data.y, 0.5, SemiMetricSpec::derivative(2));
  const fda::FunctionalSample other(fda::Grid::uniform(0.0, 1.0, 100), data.X.values());
  CHECK_THROWS(reg::predict_fplm(fit, other, other));
}
