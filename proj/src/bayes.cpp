#include "fplm/bayes.hpp"

#include "fplm/util.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace fplm::bayes {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double reflect_unit(double x) {
  while (x < 0.0 || x > 1.0) x = x < 0.0 ? -x : 2.0 - x;
  return x;
}

double percentile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double rate(const std::vector<std::uint8_t>& flags) {
  if (flags.empty()) return 0.0;
  return static_cast<double>(std::accumulate(flags.begin(), flags.end(), 0u)) / static_cast<double>(flags.size());
}

}  // namespace

double InverseGammaPrior::log_density(double x) const {
  if (!(x > 0.0)) return kNegInf;
  return shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - scale / x;
}

void InverseGammaPrior::validate() const {
  if (!(shape > 0.0) || !(scale > 0.0)) throw std::invalid_argument("inverse gamma prior needs shape, scale > 0");
}

double log_prior(const InverseGammaPrior& prior, double x2) { return prior.log_density(x2); }

void McmcConfig::validate() const {
  if (burn_in < 0) throw std::invalid_argument("burn-in must be >= 0");
  if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
  if (!(target_acceptance > 0.0 && target_acceptance < 1.0))
    throw std::invalid_argument("target acceptance must lie in (0, 1)");
  if (!(initial_tuning > 0.0)) throw std::invalid_argument("initial tuning must be positive");
  if (store_every < 1) throw std::invalid_argument("store_every must be >= 1");
  prior_h.validate();
  prior_error.validate();
}

double adapt_tuning(double tau_prev, long k, bool accepted, double xi) {
  const double c = tau_prev / (xi - xi * xi);
  const double kk = static_cast<double>(k);
  const double next = accepted ? tau_prev + c * (1.0 - xi) / kk : tau_prev - c * xi / kk;
  return std::max(next, 1e-6);
}

BandwidthPosterior::BandwidthPosterior(const reg::BandwidthRegression& model, BandwidthMode mode,
                                       InverseGammaPrior prior_h, InverseGammaPrior prior_error)
    : model_(model), mode_(mode), prior_h_(prior_h), prior_error_(prior_error) {
  prior_h_.validate();
  prior_error_.validate();
}

double BandwidthPosterior::log_likelihood(const Eigen::VectorXd& residuals, const density::ErrorBandwidth& bw) const {
  return density::loo_log_likelihood(residuals, bw);
}

double BandwidthPosterior::log_prior(const BandwidthParams& p) const {
  double lp = prior_h_.log_density(p.h2) + prior_error_.log_density(p.e2);
  if (mode_ == BandwidthMode::Localized && !(p.tau_eps >= 0.0 && p.tau_eps <= 1.0)) return kNegInf;
  return lp;
}

density::ErrorBandwidth BandwidthPosterior::error_bandwidth(const BandwidthParams& p) const {
  return mode_ == BandwidthMode::Global ? density::ErrorBandwidth::global(std::sqrt(p.e2))
                                        : density::ErrorBandwidth::localized(std::sqrt(p.e2), p.tau_eps);
}

double BandwidthPosterior::log_posterior(const BandwidthParams& p, const Eigen::VectorXd& residuals) const {
  const double lp = log_prior(p);
  if (!std::isfinite(lp)) return kNegInf;
  const double ll = log_likelihood(residuals, error_bandwidth(p));
  return std::isfinite(ll) ? ll + lp : kNegInf;
}

double BandwidthPosterior::log_posterior(const BandwidthParams& p) const {
  if (!(p.h2 > 0.0) || !(p.e2 > 0.0)) return kNegInf;
  try {
    return log_posterior(p, model_.fit_at(std::sqrt(p.h2)).residuals);
  } catch (const std::exception&) {
    return kNegInf;
  }
}

double McmcChain::acceptance_h() const { return rate(accepted_h); }
double McmcChain::acceptance_e() const { return rate(accepted_e); }
double McmcChain::acceptance_tau_eps() const { return rate(accepted_tau_eps); }
double McmcChain::h_hat() const { return std::sqrt(mean.h2); }
double McmcChain::error_hat() const { return std::sqrt(mean.e2); }

McmcChain run_sampler(const BandwidthPosterior& posterior, const McmcConfig& config) {
  config.validate();
  const bool localized = posterior.mode() == BandwidthMode::Localized;
  Rng rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const auto& model = posterior.model();
  auto refit = [&](double h2) -> std::optional<reg::RegressionDraw> {
    try {
      return model.fit_at(std::sqrt(h2));
    } catch (const std::exception&) {
      return std::nullopt;
    }
  };

  BandwidthParams theta;
  std::optional<reg::RegressionDraw> current;
  double lp = kNegInf;
  for (int attempt = 0; attempt < 1000 && !std::isfinite(lp); ++attempt) {
    if (config.start && attempt == 0) {
      theta = *config.start;
    } else {
      theta.h2 = unif(rng);
      theta.e2 = unif(rng);
      theta.tau_eps = localized ? unif(rng) : 0.0;
    }
    if (!(theta.h2 > 0.0) || !(theta.e2 > 0.0)) continue;
    current = refit(theta.h2);
    if (current) lp = posterior.log_posterior(theta, current->residuals);
  }
  if (!std::isfinite(lp)) throw std::runtime_error("sampler: no starting point with finite log posterior");

  const int M = config.burn_in;
  const int N = config.iterations;
  const double xi = config.target_acceptance;
  McmcChain chain;
  chain.mode = posterior.mode();
  chain.burn_in = M;
  chain.h2.reserve(N);
  chain.e2.reserve(N);
  chain.log_post.reserve(N);
  chain.accepted_h.reserve(N);
  chain.accepted_e.reserve(N);
  chain.tuning_h.reserve(M + N);
  chain.tuning_e.reserve(M + N);
  if (localized) {
    chain.tau_eps.reserve(N);
    chain.accepted_tau_eps.reserve(N);
    chain.tuning_tau_eps.reserve(M + N);
  }

  double tau_h = config.initial_tuning, tau_e = config.initial_tuning, tau_t = config.initial_tuning;
  double sum_h2 = 0.0, sum_e2 = 0.0, sum_t = 0.0;
  Eigen::VectorXd sum_beta = Eigen::VectorXd::Zero(current->beta.size());
  Eigen::VectorXd sum_fitted = Eigen::VectorXd::Zero(current->fitted.size());

  for (long k = 1; k <= M + N; ++k) {
    // h^2 | b^2: refit the regression at the proposed bandwidth.
    bool acc_h = false;
    {
      BandwidthParams prop = theta;
      prop.h2 = theta.h2 + tau_h * normal(rng);
      const double log_u = std::log(unif(rng));
      if (prop.h2 > 0.0) {
        auto draw = refit(prop.h2);
        if (draw) {
          const double lp_prop = posterior.log_posterior(prop, draw->residuals);
          if (std::isfinite(lp_prop) && log_u < lp_prop - lp) {
            theta = prop;
            current = std::move(draw);
            lp = lp_prop;
            acc_h = true;
          }
        }
      }
      tau_h = adapt_tuning(tau_h, k, acc_h, xi);
    }
    // Error-density scale | h^2 (residuals fixed).
    bool acc_e = false;
    {
      BandwidthParams prop = theta;
      prop.e2 = theta.e2 + tau_e * normal(rng);
      const double log_u = std::log(unif(rng));
      if (prop.e2 > 0.0) {
        const double lp_prop = posterior.log_posterior(prop, current->residuals);
        if (std::isfinite(lp_prop) && log_u < lp_prop - lp) {
          theta = prop;
          lp = lp_prop;
          acc_e = true;
        }
      }
      tau_e = adapt_tuning(tau_e, k, acc_e, xi);
    }
    bool acc_t = false;
    if (localized) {
      BandwidthParams prop = theta;
      prop.tau_eps = reflect_unit(theta.tau_eps + tau_t * normal(rng));
      const double log_u = std::log(unif(rng));
      const double lp_prop = posterior.log_posterior(prop, current->residuals);
      if (std::isfinite(lp_prop) && log_u < lp_prop - lp) {
        theta = prop;
        lp = lp_prop;
        acc_t = true;
      }
      tau_t = adapt_tuning(tau_t, k, acc_t, xi);
      chain.tuning_tau_eps.push_back(tau_t);
    }
    chain.tuning_h.push_back(tau_h);
    chain.tuning_e.push_back(tau_e);

    if (k <= M) continue;
    const int idx = static_cast<int>(k - M - 1);
    chain.h2.push_back(theta.h2);
    chain.e2.push_back(theta.e2);
    chain.log_post.push_back(lp);
    chain.accepted_h.push_back(acc_h);
    chain.accepted_e.push_back(acc_e);
    if (localized) {
      chain.tau_eps.push_back(theta.tau_eps);
      chain.accepted_tau_eps.push_back(acc_t);
    }
    sum_h2 += theta.h2;
    sum_e2 += theta.e2;
    sum_t += theta.tau_eps;
    sum_beta += current->beta;
    sum_fitted += current->fitted;
    if (idx % config.store_every == 0) {
      chain.stored_index.push_back(idx);
      chain.stored_beta.push_back(current->beta);
      chain.stored_fitted.push_back(current->fitted);
    }
  }

  const auto count = [](const std::vector<std::uint8_t>& f) { return std::accumulate(f.begin(), f.end(), 0u); };
  if (count(chain.accepted_h) == 0 || count(chain.accepted_e) == 0 ||
      (localized && count(chain.accepted_tau_eps) == 0))
    throw std::runtime_error("sampler: no proposal accepted after burn-in; try a different initial tuning (tau0)");

  const double dn = static_cast<double>(N);
  chain.mean = {sum_h2 / dn, sum_e2 / dn, localized ? sum_t / dn : 0.0};
  chain.mean_beta = sum_beta / dn;
  chain.mean_fitted = sum_fitted / dn;
  return chain;
}

double simulation_inefficiency(double naive_se, double batch_se) {
  if (!(naive_se > 0.0)) return 0.0;
  const double r = batch_se / naive_se;
  return r * r;
}

ParameterSummary summarize(std::string name, std::span<const double> draws, int max_lag) {
  const std::size_t N = draws.size();
  if (N < 100) throw std::invalid_argument("diagnostics: chain too short (" + std::to_string(N) + " < 100 draws)");
  ParameterSummary s;
  s.name = std::move(name);
  const double dn = static_cast<double>(N);
  s.mean = std::accumulate(draws.begin(), draws.end(), 0.0) / dn;
  double ss = 0.0;
  for (double x : draws) ss += (x - s.mean) * (x - s.mean);
  s.sd = std::sqrt(ss / (dn - 1.0));
  std::vector<double> sorted(draws.begin(), draws.end());
  s.ci_lower = percentile(sorted, 0.025);
  s.ci_upper = percentile(sorted, 0.975);
  s.naive_se = s.sd / std::sqrt(dn);

  const auto batches = static_cast<std::size_t>(std::floor(std::sqrt(dn)));
  const std::size_t len = N / batches;
  std::vector<double> means(batches);
  for (std::size_t b = 0; b < batches; ++b) {
    double acc = 0.0;
    for (std::size_t t = b * len; t < (b + 1) * len; ++t) acc += draws[t];
    means[b] = acc / static_cast<double>(len);
  }
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(batches);
  double bss = 0.0;
  for (double m : means) bss += (m - grand) * (m - grand);
  s.batch_se = std::sqrt(bss / static_cast<double>(batches - 1)) / std::sqrt(static_cast<double>(batches));
  s.sif = simulation_inefficiency(s.naive_se, s.batch_se);

  const auto lags = static_cast<std::size_t>(std::min<long>(max_lag, static_cast<long>(N) - 1));
  s.acf.assign(lags + 1, 0.0);
  const double c0 = ss / dn;
  for (std::size_t l = 0; l <= lags; ++l) {
    double acc = 0.0;
    for (std::size_t t = 0; t + l < N; ++t) acc += (draws[t] - s.mean) * (draws[t + l] - s.mean);
    s.acf[l] = c0 > 0.0 ? acc / dn / c0 : (l == 0 ? 1.0 : 0.0);
  }
  return s;
}

PosteriorSummary diagnostics(const McmcChain& chain) {
  const bool localized = chain.mode == BandwidthMode::Localized;
  auto roots = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    std::transform(v.begin(), v.end(), r.begin(), [](double x) { return std::sqrt(x); });
    return r;
  };
  PosteriorSummary out;
  out.draws = chain.size();
  out.parameters.push_back(summarize("h", roots(chain.h2)));
  out.parameters.push_back(summarize(localized ? "tau" : "b", roots(chain.e2)));
  if (localized) out.parameters.push_back(summarize("tau_eps", chain.tau_eps));
  out.acceptance_h = chain.acceptance_h();
  out.acceptance_e = chain.acceptance_e();
  out.acceptance_tau_eps = chain.acceptance_tau_eps();
  return out;
}

ChibResult chib_marginal_likelihood(const McmcChain& chain, const BandwidthPosterior& posterior) {
  if (chain.size() == 0) throw std::invalid_argument("chib: empty chain");
  const bool localized = chain.mode == BandwidthMode::Localized;
  std::vector<const std::vector<double>*> dims{&chain.h2, &chain.e2};
  if (localized) dims.push_back(&chain.tau_eps);
  const std::vector<double> at = localized ? std::vector<double>{chain.mean.h2, chain.mean.e2, chain.mean.tau_eps}
                                           : std::vector<double>{chain.mean.h2, chain.mean.e2};
  const double N = static_cast<double>(chain.size());
  const double D = static_cast<double>(dims.size());
  const double factor = std::pow(4.0 / ((D + 2.0) * N), 1.0 / (D + 4.0));

  std::vector<double> bw(dims.size());
  double log_bw_sum = 0.0;
  for (std::size_t d = 0; d < dims.size(); ++d) {
    const auto& v = *dims[d];
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / N;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / std::max(N - 1.0, 1.0));
    if (!(sd > 0.0)) throw std::runtime_error("chib: chain is constant in one parameter");
    bw[d] = sd * factor;
    log_bw_sum += std::log(bw[d]);
  }
  std::vector<double> terms(chain.size());
  double top = kNegInf;
  for (std::size_t k = 0; k < chain.size(); ++k) {
    double t = 0.0;
    for (std::size_t d = 0; d < dims.size(); ++d) {
      const double u = (at[d] - (*dims[d])[k]) / bw[d];
      t -= 0.5 * u * u;
    }
    terms[k] = t;
    top = std::max(top, t);
  }
  double s = 0.0;
  for (double t : terms) s += std::exp(t - top);
  const double ordinate = top + std::log(s) - std::log(N) - log_bw_sum - D * kLogSqrt2Pi;
  if (!std::isfinite(ordinate)) throw std::runtime_error("chib: posterior ordinate is zero at the posterior mean");

  ChibResult r;
  r.at = chain.mean;
  const auto draw = posterior.model().fit_at(std::sqrt(r.at.h2));
  r.log_likelihood = posterior.log_likelihood(draw.residuals, posterior.error_bandwidth(r.at));
  r.log_prior = posterior.log_prior(r.at);
  r.log_posterior_ordinate = ordinate;
  r.log_marginal = r.log_likelihood + r.log_prior - ordinate;
  return r;
}

std::vector<CandidateResult> select_semimetric(const std::vector<metric::SemiMetricSpec>& candidates,
                                               const SelectionData& data, const McmcConfig& config, int threads) {
  if (candidates.size() < 2) throw std::invalid_argument("select_semimetric: need at least two candidates");
  std::vector<CandidateResult> results(candidates.size());
  parallel_for(candidates.size(), threads, [&](std::size_t i) {
    auto& r = results[i];
    r.index = i;
    r.spec = candidates[i];
    try {
      reg::FplmFitter fitter(reg::make_training(data.X, data.Z, data.y, candidates[i]), data.options);
      BandwidthPosterior post(fitter, config.mode, config.prior_h, config.prior_error);
      McmcConfig cfg = config;
      cfg.seed = derive_seed(config.seed, i);
      const auto chain = run_sampler(post, cfg);
      r.summary = diagnostics(chain);
      r.chib = chib_marginal_likelihood(chain, post);
      r.ok = true;
    } catch (const std::exception& e) {
      r.error = e.what();
    }
  });
  std::stable_sort(results.begin(), results.end(), [](const CandidateResult& a, const CandidateResult& b) {
    if (a.ok != b.ok) return a.ok;
    return a.ok && a.chib.log_marginal > b.chib.log_marginal;
  });
  const double best = results.front().ok ? results.front().chib.log_marginal : 0.0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    results[i].rank = static_cast<int>(i) + 1;
    results[i].log_bayes_factor =
        results[i].ok ? results[i].chib.log_marginal - best : std::numeric_limits<double>::quiet_NaN();
  }
  return results;
}

Eigen::MatrixXd log_bayes_factors(const std::vector<CandidateResult>& results) {
  const auto n = static_cast<Eigen::Index>(results.size());
  Eigen::MatrixXd out = Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
  for (const auto& a : results)
    for (const auto& b : results)
      if (a.ok && b.ok)
        out(static_cast<Eigen::Index>(a.index), static_cast<Eigen::Index>(b.index)) =
            a.chib.log_marginal - b.chib.log_marginal;
  return out;
}

}  // namespace fplm::bayes
