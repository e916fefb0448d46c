#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fplm/bayes.hpp"
#include "fplm/bench.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace fplm;
using bayes::BandwidthMode;
using metric::SemiMetricSpec;

namespace {

struct Toy {
  Eigen::VectorXd y;
  std::shared_ptr<const reg::TrainingData> training;
};

Toy toy(std::size_t n, std::uint64_t seed) {
  const auto d = bench::simulate_smooth(n, seed);
  std::mt19937_64 rng(seed + 100);
  std::normal_distribution<double> z(0.0, 0.5);
  Eigen::VectorXd y = d.g;
  for (auto& v : y) v += z(rng);
  return {y, reg::make_training(d.X, d.X, y, SemiMetricSpec::derivative(2))};
}

// Flat likelihood: the chain samples the prior.
class PriorOnly : public bayes::BandwidthPosterior {
 public:
  using BandwidthPosterior::BandwidthPosterior;
  double log_likelihood(const Eigen::VectorXd&, const density::ErrorBandwidth&) const override { return 0.0; }
};

class Shifted : public bayes::BandwidthPosterior {
 public:
  using BandwidthPosterior::BandwidthPosterior;
  double log_likelihood(const Eigen::VectorXd& r, const density::ErrorBandwidth& bw) const override {
    return BandwidthPosterior::log_likelihood(r, bw) + 5.0;
  }
};

}  // namespace

TEST_CASE("inverse gamma log density") {
  const bayes::InverseGammaPrior ig;
  CHECK(std::abs(ig.log_density(1.0) - (std::log(0.05) - 0.05)) < 1e-14);
  CHECK(std::abs(ig.log_density(1.0) - (-3.0457)) < 1e-4);
  CHECK(ig.log_density(0.0) == -std::numeric_limits<double>::infinity());
  CHECK(ig.log_density(-1.0) == -std::numeric_limits<double>::infinity());
  CHECK_THROWS((bayes::InverseGammaPrior{0.0, 1.0}.validate()));
}

TEST_CASE("adaptive tuning update") {
  CHECK(std::abs(bayes::adapt_tuning(1.0, 10, false, 0.44) - 0.8214) < 1e-4);
  CHECK(std::abs(bayes::adapt_tuning(1.0, 10, true, 0.44) - 1.2273) < 1e-4);
  CHECK(bayes::adapt_tuning(1e-6, 1, false, 0.44) == 1e-6);
}

TEST_CASE("simulation inefficiency from reference standard errors") {
  CHECK(bayes::simulation_inefficiency(0.1217, 0.3175) == doctest::Approx(6.806).epsilon(1e-3));
  CHECK(bayes::simulation_inefficiency(0.0967, 0.2300) == doctest::Approx(5.657).epsilon(1e-3));
  CHECK(std::round(bayes::simulation_inefficiency(0.1217, 0.3175) * 100) / 100 == doctest::Approx(6.81));
}

TEST_CASE("summaries of iid draws have SIF near one") {
  int inside = 0;
  double total = 0.0;
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(2.0, 3.0);
    std::vector<double> v(10000);
    for (auto& x : v) x = z(rng);
    const auto s = bayes::summarize("x", v);
    CHECK(s.ci_lower <= s.ci_upper);
    CHECK(s.sif >= 0.0);
    CHECK(s.acf.size() == 51);
    CHECK(s.acf[0] == doctest::Approx(1.0));
    CHECK(std::abs(s.naive_se - 3.0 / 100.0) < 0.003);
    if (s.sif >= 0.5 && s.sif <= 2.0) ++inside;
    total += s.sif;
  }
  CHECK(inside >= 38);
  CHECK(std::abs(total / 40 - 1.0) < 0.3);
  CHECK_THROWS(bayes::summarize("x", std::vector<double>(99, 1.0)));
}

TEST_CASE("summary of a correlated chain") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  std::vector<double> v(20000);
  double x = 0.0;
  for (auto& s : v) s = x = 0.9 * x + z(rng);
  const auto s = bayes::summarize("ar1", v);
  // AR(1) with rho = 0.9: integrated autocorrelation (1 + rho) / (1 - rho) = 19.
  CHECK(s.sif > 10.0);
  CHECK(s.sif < 30.0);
  CHECK(std::abs(s.acf[1] - 0.9) < 0.03);
}

TEST_CASE("sampler under a flat likelihood recovers the prior") {
  const auto t = toy(20, 1);
  reg::FnpFitter model(t.training);
  const bayes::InverseGammaPrior ig{3.0, 2.0};
  PriorOnly post(model, BandwidthMode::Global, ig, ig);
  bayes::McmcConfig cfg;
  cfg.burn_in = 2000;
  cfg.iterations = 40000;
  cfg.seed = 7;
  cfg.prior_h = ig;
  cfg.prior_error = ig;
  const auto chain = bayes::run_sampler(post, cfg);
  REQUIRE(chain.size() == 40000);
  CHECK(chain.tuning_h.size() == 42000);
  // IG(3, 2): mean 1, P(x <= 1) = 5 exp(-2).
  const double cdf1 = 5.0 * std::exp(-2.0);
  for (const auto* v : {&chain.h2, &chain.e2}) {
    const double mean = std::accumulate(v->begin(), v->end(), 0.0) / 40000.0;
    CHECK(std::abs(mean - 1.0) < 0.1);
    const double below = static_cast<double>(std::count_if(v->begin(), v->end(), [](double x) { return x <= 1.0; })) / 40000.0;
    CHECK(std::abs(below - cdf1) < 0.04);
    const double inv = std::accumulate(v->begin(), v->end(), 0.0, [](double acc, double x) { return acc + 1.0 / x; }) / 40000.0;
    CHECK(std::abs(inv - 1.5) < 0.1);
  }
  CHECK(std::abs(chain.acceptance_h() - 0.44) < 0.1);
  CHECK(std::abs(chain.acceptance_e() - 0.44) < 0.1);
}

TEST_CASE("localized sampler keeps tau_eps in the unit interval") {
  const auto t = toy(25, 2);
  reg::FnpFitter model(t.training);
  bayes::BandwidthPosterior post(model, BandwidthMode::Localized);
  bayes::McmcConfig cfg;
  cfg.burn_in = 200;
  cfg.iterations = 1000;
  cfg.mode = BandwidthMode::Localized;
  const auto chain = bayes::run_sampler(post, cfg);
  CHECK(chain.tau_eps.size() == 1000);
  CHECK(*std::min_element(chain.tau_eps.begin(), chain.tau_eps.end()) >= 0.0);
  CHECK(*std::max_element(chain.tau_eps.begin(), chain.tau_eps.end()) <= 1.0);
  const auto s = bayes::diagnostics(chain);
  CHECK(s.parameters.size() == 3);
  CHECK(s.parameters[2].name == "tau_eps");
  CHECK(s.acceptance_tau_eps > 0.0);
}

TEST_CASE("fixed seed gives a bit-identical chain and marginal likelihood") {
  const auto t = toy(30, 3);
  reg::FplmFitter model(t.training);
  bayes::BandwidthPosterior post(model, BandwidthMode::Global);
  bayes::McmcConfig cfg;
  cfg.burn_in = 200;
  cfg.iterations = 800;
  cfg.seed = 11;
  const auto a = bayes::run_sampler(post, cfg);
  const auto b = bayes::run_sampler(post, cfg);
  CHECK(a.h2 == b.h2);
  CHECK(a.e2 == b.e2);
  CHECK(a.log_post == b.log_post);
  CHECK(a.mean_beta == b.mean_beta);
  CHECK(a.stored_index.size() == 80);
  CHECK(bayes::chib_marginal_likelihood(a, post).log_marginal == bayes::chib_marginal_likelihood(b, post).log_marginal);
  cfg.seed = 12;
  CHECK(bayes::run_sampler(post, cfg).h2 != a.h2);
}

TEST_CASE("marginal likelihood moves with the likelihood normalizing constant") {
  const auto t = toy(30, 4);
  reg::FnpFitter model(t.training);
  bayes::BandwidthPosterior post(model, BandwidthMode::Global);
  Shifted shifted(model, BandwidthMode::Global);
  bayes::McmcConfig cfg;
  cfg.burn_in = 300;
  cfg.iterations = 2000;
  const auto a = bayes::run_sampler(post, cfg);
  const auto b = bayes::run_sampler(shifted, cfg);
  CHECK(a.h2 == b.h2);
  const double diff = bayes::chib_marginal_likelihood(b, shifted).log_marginal -
                      bayes::chib_marginal_likelihood(a, post).log_marginal;
  CHECK(std::abs(diff - 5.0) < 1e-9);
}

TEST_CASE("chib estimate agrees with grid quadrature") {
  const auto t = toy(30, 5);
  reg::FnpFitter model(t.training);
  bayes::BandwidthPosterior post(model, BandwidthMode::Global);
  bayes::McmcConfig cfg;
  cfg.burn_in = 1000;
  cfg.iterations = 10000;
  cfg.seed = 3;
  const auto chain = bayes::run_sampler(post, cfg);
  const double chib = bayes::chib_marginal_likelihood(chain, post).log_marginal;
  const double quad = oracle::quadrature_log_marginal(post, 1e-5, 1e3, 1e-4, 1e3);
  MESSAGE("chib " << chib << " quadrature " << quad);
  CHECK(std::abs(chib - quad) < 0.5);
}

TEST_CASE("semi-metric selection ranks candidates") {
  const auto d = bench::simulate_smooth(40, 9);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z(0.0, 0.5);
  Eigen::VectorXd y = d.g;
  for (auto& v : y) v += z(rng);
  const bayes::SelectionData data{d.X, d.X, y, {}};
  bayes::McmcConfig cfg;
  cfg.burn_in = 100;
  cfg.iterations = 400;
  const std::vector<SemiMetricSpec> cands{SemiMetricSpec::derivative(2), SemiMetricSpec::fpca(3),
                                          SemiMetricSpec::fpca(60)};
  const auto res = bayes::select_semimetric(cands, data, cfg, 1);
  REQUIRE(res.size() == 3);
  CHECK(res[0].ok);
  CHECK(res[0].rank == 1);
  CHECK(res[0].log_bayes_factor == 0.0);
  CHECK(res[1].chib.log_marginal <= res[0].chib.log_marginal);
  CHECK(res[1].log_bayes_factor <= 0.0);
  CHECK_FALSE(res[2].ok);
  CHECK(res[2].spec.label() == "fpca:60");
  CHECK_FALSE(res[2].error.empty());

  const auto par = bayes::select_semimetric(cands, data, cfg, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(par[i].index == res[i].index);
    CHECK(par[i].chib.log_marginal == res[i].chib.log_marginal);
  }
  const auto bf = bayes::log_bayes_factors(res);
  const auto a = res[0].index, b = res[1].index;
  CHECK(std::abs(bf(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) - res[1].log_bayes_factor) < 1e-12);
  CHECK(std::isnan(bf(2, 0)));
}
