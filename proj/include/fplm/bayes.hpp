#pragma once

// Bayesian bandwidth estimation: adaptive random-walk Metropolis over the
// squared regression bandwidth and the error-density bandwidth(s), chain
// diagnostics, Chib's marginal likelihood and semi-metric selection.

#include "fplm/error_density.hpp"
#include "fplm/regressors.hpp"
#include "fplm/semimetric.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fplm::bayes {

using density::BandwidthMode;

/// Shape-scale inverse gamma: density beta^a / Gamma(a) x^-(a+1) exp(-beta/x).
struct InverseGammaPrior {
  double shape = 1.0;
  double scale = 0.05;

  double log_density(double x) const;  // -inf for x <= 0
  void validate() const;
};

double log_prior(const InverseGammaPrior& prior, double x2);

/// Sampled quantities; e2 is b^2 (global) or tau^2 (localized).
struct BandwidthParams {
  double h2 = 0.0;
  double e2 = 0.0;
  double tau_eps = 0.0;
};

struct McmcConfig {
  int burn_in = 1000;
  int iterations = 10000;
  double target_acceptance = 0.44;
  double initial_tuning = 0.1;
  std::uint64_t seed = 1;
  BandwidthMode mode = BandwidthMode::Global;
  int store_every = 10;  // keep beta-hat / fitted values for every k-th retained draw
  InverseGammaPrior prior_h;
  InverseGammaPrior prior_error;
  std::optional<BandwidthParams> start;  // default: U(0,1) draws

  void validate() const;
};

/// tau + c (1 - xi) / k on acceptance, tau - c xi / k otherwise, with
/// c = tau / (xi - xi^2); never below 1e-6.
double adapt_tuning(double tau_prev, long k, bool accepted, double xi);

/// Log posterior of the bandwidths for one regression model. The likelihood
/// is the leave-one-out kernel likelihood of the residuals; subclasses may
/// replace it.
class BandwidthPosterior {
 public:
  BandwidthPosterior(const reg::BandwidthRegression& model, BandwidthMode mode, InverseGammaPrior prior_h = {},
                     InverseGammaPrior prior_error = {});
  virtual ~BandwidthPosterior() = default;

  virtual double log_likelihood(const Eigen::VectorXd& residuals, const density::ErrorBandwidth& bw) const;

  double log_prior(const BandwidthParams& p) const;
  density::ErrorBandwidth error_bandwidth(const BandwidthParams& p) const;
  /// Refits the model at h = sqrt(h2); -inf for invalid parameters or failed fits.
  double log_posterior(const BandwidthParams& p) const;
  double log_posterior(const BandwidthParams& p, const Eigen::VectorXd& residuals) const;

  const reg::BandwidthRegression& model() const { return model_; }
  BandwidthMode mode() const { return mode_; }
  const InverseGammaPrior& prior_h() const { return prior_h_; }
  const InverseGammaPrior& prior_error() const { return prior_error_; }

 private:
  const reg::BandwidthRegression& model_;
  BandwidthMode mode_;
  InverseGammaPrior prior_h_;
  InverseGammaPrior prior_error_;
};

struct McmcChain {
  BandwidthMode mode = BandwidthMode::Global;
  int burn_in = 0;
  // Retained draws, length N.
  std::vector<double> h2;
  std::vector<double> e2;
  std::vector<double> tau_eps;  // localized only
  std::vector<double> log_post;
  std::vector<std::uint8_t> accepted_h;
  std::vector<std::uint8_t> accepted_e;
  std::vector<std::uint8_t> accepted_tau_eps;
  // Proposal scales over all M + N iterations.
  std::vector<double> tuning_h;
  std::vector<double> tuning_e;
  std::vector<double> tuning_tau_eps;
  // Thinned per-draw curves and their retained-draw indices.
  std::vector<int> stored_index;
  std::vector<Eigen::VectorXd> stored_beta;
  std::vector<Eigen::VectorXd> stored_fitted;
  // Ergodic averages over all retained draws.
  BandwidthParams mean;
  Eigen::VectorXd mean_beta;
  Eigen::VectorXd mean_fitted;

  std::size_t size() const { return h2.size(); }
  double acceptance_h() const;
  double acceptance_e() const;
  double acceptance_tau_eps() const;
  /// sqrt of the ergodic averages of the squared parameters.
  double h_hat() const;
  double error_hat() const;
};

McmcChain run_sampler(const BandwidthPosterior& posterior, const McmcConfig& config);

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double naive_se = 0.0;
  double batch_se = 0.0;
  double sif = 0.0;
  std::vector<double> acf;  // lags 0..50
};

ParameterSummary summarize(std::string name, std::span<const double> draws, int max_lag = 50);

/// (batch SE / naive SE)^2.
double simulation_inefficiency(double naive_se, double batch_se);

struct PosteriorSummary {
  std::vector<ParameterSummary> parameters;  // bandwidth scale: h, b (or tau, tau_eps)
  double acceptance_h = 0.0;
  double acceptance_e = 0.0;
  double acceptance_tau_eps = 0.0;
  std::size_t draws = 0;
};

PosteriorSummary diagnostics(const McmcChain& chain);

struct ChibResult {
  double log_marginal = 0.0;
  double log_likelihood = 0.0;
  double log_prior = 0.0;
  double log_posterior_ordinate = 0.0;
  BandwidthParams at;
};

/// log L(y | theta) + log pi(theta) - log pi(theta | y) at the posterior mean
/// of the squared parameters; the ordinate is a product-Gaussian kernel
/// estimate over the retained draws.
ChibResult chib_marginal_likelihood(const McmcChain& chain, const BandwidthPosterior& posterior);

struct SelectionData {
  fda::FunctionalSample X;
  fda::FunctionalSample Z;
  Eigen::VectorXd y;
  reg::FplmOptions options;
};

struct CandidateResult {
  std::size_t index = 0;  // position in the candidate list
  metric::SemiMetricSpec spec;
  bool ok = false;
  std::string error;
  ChibResult chib;
  PosteriorSummary summary;
  double log_bayes_factor = 0.0;  // against the winner
  int rank = 0;                   // 1 = largest LML; failed candidates rank last
};

/// One FPLM sampler run per candidate on stream (seed, index); sorted by rank.
std::vector<CandidateResult> select_semimetric(const std::vector<metric::SemiMetricSpec>& candidates,
                                               const SelectionData& data, const McmcConfig& config,
                                               int threads = 1);

/// Entry (a, b): log L_a(y) - log L_b(y), in candidate order; NaN for failures.
Eigen::MatrixXd log_bayes_factors(const std::vector<CandidateResult>& results);

}  // namespace fplm::bayes
