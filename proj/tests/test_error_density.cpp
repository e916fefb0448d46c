#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fplm/error_density.hpp"

#include <cmath>
#include <limits>
#include <random>

using namespace fplm::density;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Eigen::VectorXd random_residuals(int n, unsigned seed, double spread = 1.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-spread, spread);
  Eigen::VectorXd r(n);
  for (auto& x : r) x = u(rng);
  return r;
}

double trapezoid_mass(const KernelErrorDensity& d) {
  const auto pts = d.curve();
  double acc = 0.0;
  for (std::size_t k = 1; k < pts.size(); ++k)
    acc += 0.5 * (pts[k].second + pts[k - 1].second) * (pts[k].first - pts[k - 1].first);
  return acc;
}

}  // namespace

TEST_CASE("density values") {
  const auto d = KernelErrorDensity::global(vec({-1.0, 1.0}), 1.0);
  CHECK(d.density_at(0.0) == doctest::Approx(0.24197).epsilon(1e-4));
  CHECK(d.density_at(45.0) < 1e-300);
  CHECK(d.density_at(-1e6) == 0.0);
}

TEST_CASE("localized with tau_eps = 0 is the global estimator") {
  const auto r = random_residuals(40, 1);
  const auto g = KernelErrorDensity::global(r, 0.6);
  const auto l = KernelErrorDensity::localized(r, 0.6, 0.0);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-6.0, 6.0);
  for (int k = 0; k < 100; ++k) {
    const double e = u(rng);
    CHECK(g.density_at(e) == l.density_at(e));
    CHECK(g.cdf_at(e) == l.cdf_at(e));
  }
  CHECK(loo_log_likelihood(r, ErrorBandwidth::global(0.6)) == loo_log_likelihood(r, ErrorBandwidth::localized(0.6, 0.0)));
}

TEST_CASE("localized bandwidths grow with the residual size") {
  const auto d = KernelErrorDensity::localized(vec({0.0, -2.0, 3.0}), 0.5, 0.4);
  CHECK(d.component_sd()(0) == doctest::Approx(0.5));
  CHECK(d.component_sd()(1) == doctest::Approx(0.5 * 1.8));
  CHECK(d.component_sd()(2) == doctest::Approx(0.5 * 2.2));
  CHECK_THROWS(KernelErrorDensity::localized(vec({0.0}), 0.5, 1.5));
  CHECK_THROWS(KernelErrorDensity::global(vec({0.0}), 0.0));
}

TEST_CASE("leave-one-out likelihood by hand") {
  CHECK(loo_log_likelihood(vec({-1.0, 0.0, 1.0}), ErrorBandwidth::global(1.0)) == doctest::Approx(-5.240).epsilon(1e-3 / 5.24));
  CHECK(std::abs(loo_log_likelihood(vec({-1.0, 0.0, 1.0}), ErrorBandwidth::global(1.0)) -
                 (2 * std::log(0.5 * (0.24197072451914337 + 0.05399096651318806)) + std::log(0.24197072451914337))) < 1e-12);
  CHECK(std::abs(loo_log_likelihood(vec({0.0, 0.0}), ErrorBandwidth::global(1.0)) - (-1.8378770664093453)) < 1e-12);
  CHECK_THROWS(loo_log_likelihood(vec({0.0}), ErrorBandwidth::global(1.0)));
}

TEST_CASE("leave-one-out likelihood stays finite far into kernel underflow") {
  const double ll = loo_log_likelihood(vec({-1e5, 1e5}), ErrorBandwidth::global(1e-3));
  CHECK(std::isfinite(ll));
  CHECK(ll < -1e15);
  CHECK(loo_log_likelihood(vec({0.0, std::numeric_limits<double>::infinity()}), ErrorBandwidth::global(1.0)) ==
        -std::numeric_limits<double>::infinity());
}

TEST_CASE("leave-one-out likelihood is translation invariant and continuous in b") {
  const auto r = random_residuals(60, 3);
  const Eigen::VectorXd shifted = r.array() + 2.75;
  for (double b : {0.1, 0.4, 1.3}) {
    const double a = loo_log_likelihood(r, ErrorBandwidth::global(b));
    CHECK(std::abs(a - loo_log_likelihood(shifted, ErrorBandwidth::global(b))) < 1e-9);
    const double eps = 1e-7;
    const double up = loo_log_likelihood(r, ErrorBandwidth::global(b + eps));
    CHECK(std::abs(up - a) < 1e-3);
  }
}

TEST_CASE("density integrates to one") {
  for (unsigned seed = 1; seed <= 5; ++seed) {
    const auto r = random_residuals(50, seed, 5.0);
    CHECK(std::abs(trapezoid_mass(KernelErrorDensity::global(r, 1.0)) - 1.0) < 1e-3);
    CHECK(std::abs(trapezoid_mass(KernelErrorDensity::global(r, 0.05)) - 1.0) < 1e-3);
    CHECK(std::abs(trapezoid_mass(KernelErrorDensity::localized(r, 0.2, 0.16)) - 1.0) < 1e-3);
  }
}

TEST_CASE("cdf and quantiles") {
  const auto sym = KernelErrorDensity::global(vec({-1.0, 1.0}), 0.7);
  CHECK(sym.cdf_at(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(std::abs(sym.quantile(0.5)) < 0.02);

  const auto r = random_residuals(30, 4, 3.0);
  CHECK(KernelErrorDensity::global(r, 1.0).cdf_at(10.0) >= 0.999);

  const auto unit = KernelErrorDensity::global(vec({0.0}), 1.0);
  CHECK(std::abs(unit.quantile(0.8413) - 1.0) < 0.02);
  CHECK_THROWS(unit.quantile(0.0));
  CHECK_THROWS(unit.quantile(1.0));
  CHECK_THROWS(unit.quantile(-0.2));

  const auto d = KernelErrorDensity::localized(r, 0.4, 0.3);
  double prev = 0.0;
  for (int k = 0; k <= 400; ++k) {
    const double x = -10.0 + 0.05 * k;
    const double f = d.cdf_at(x);
    CHECK(f >= prev);
    prev = f;
  }
  for (double x : {-2.0, -0.5, 0.0, 0.8, 2.0}) CHECK(std::abs(d.quantile(d.cdf_at(x)) - x) <= 0.02);
}

TEST_CASE("prediction intervals") {
  const auto sym = KernelErrorDensity::global(vec({-1.0, -0.3, 0.3, 1.0}), 0.5);
  const auto pi = prediction_interval(sym, 12.0, 0.8);
  CHECK(pi.lower <= pi.upper);
  CHECK(std::abs((pi.upper - 12.0) - (12.0 - pi.lower)) < 0.02);
  CHECK(pi.level == 0.8);
  CHECK_THROWS(prediction_interval(sym, 0.0, 1.0));
}
