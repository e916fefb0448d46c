#pragma once

// Simulated curves and errors, accuracy criteria, and the Monte Carlo and
// bootstrap harnesses comparing FPLM, FNP and FPCR.

#include "fplm/bayes.hpp"
#include "fplm/error_density.hpp"
#include "fplm/fda.hpp"
#include "fplm/regressors.hpp"
#include "fplm/semimetric.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fplm::bench {

enum class ErrorKind { T5, SkewUnimodal, SkewBimodal };

std::string_view to_string(ErrorKind kind);
ErrorKind parse_error_kind(std::string_view text);  // t5 | skewunimodal | skewbimodal
double error_mean(ErrorKind kind);

Eigen::VectorXd draw_errors(ErrorKind kind, std::size_t n, std::uint64_t seed);
double true_density(ErrorKind kind, double e);

/// Curves a cos(2t) + b sin(4t) + c (t^2 - pi t + 2 pi^2 / 9) on 100 points of [0, pi].
struct DgpDraw {
  fda::FunctionalSample X;
  fda::FunctionalSample Z;  // first derivative through the B-spline fit
  Eigen::VectorXd a, b, c;
  Eigen::VectorXd g;        // 10 (a^2 - b^2)
};

fda::Grid dgp_grid();
/// `noise` (n x 100) is added pointwise when given.
DgpDraw curves_from_coefficients(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& c,
                                 const Eigen::MatrixXd* noise = nullptr);
DgpDraw simulate_smooth(std::size_t n, std::uint64_t seed);
/// simulate_smooth plus U(-noise_range, noise_range) at every grid point.
DgpDraw simulate_rough(std::size_t n, std::uint64_t seed, double noise_range = 0.1);

struct Replicate {
  Eigen::VectorXd truth;
  Eigen::VectorXd estimate;
};

/// (1 / (n B)) sum_s sum_i (truth - estimate)^2.
double averaged_squared_error(std::span<const Replicate> reps);

struct AmseAmspe {
  double amse = 0.0;
  double amspe = 0.0;
};

AmseAmspe amse_amspe(std::span<const Replicate> train, std::span<const Replicate> holdout);

struct MiseKl {
  double mise = 0.0;
  double kl = 0.0;
};

/// Riemann sums with step 1/50 over 1001 points of [-10, 10]; f-hat floored at 1e-300.
MiseKl mise_kl(const std::function<double(double)>& truth, const std::function<double(double)>& estimate);
/// `shift` moves the true density to match centred errors: f(e + shift).
MiseKl mise_kl(ErrorKind kind, const density::KernelErrorDensity& estimate, double shift = 0.0);

double rmse(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat);

struct RmseRmspe {
  double rmse = 0.0;
  double rmspe = 0.0;
};

RmseRmspe rmse_rmspe(const Eigen::VectorXd& y_train, const Eigen::VectorXd& yhat_train, const Eigen::VectorXd& y_test,
                     const Eigen::VectorXd& yhat_test);

enum class Model { Fplm, Fnp, Fpcr };
std::string_view to_string(Model m);
Model parse_model(std::string_view text);

/// Which curves the kernel part of FPLM/FNP measures distances on.
enum class NpInput { Raw, Derivative };
std::string_view to_string(NpInput v);
NpInput parse_np_input(std::string_view text);

struct PipelineOptions {
  bayes::McmcConfig mcmc;
  reg::FplmOptions fplm;
  NpInput np_input = NpInput::Raw;
  int fpcr_components = 3;
};

/// One model fitted on a training set and applied to a test set.
struct ModelRun {
  Eigen::VectorXd fitted;
  Eigen::VectorXd residuals;
  Eigen::VectorXd predictions;
  double h = 0.0;
  density::ErrorBandwidth error_bandwidth;
  std::optional<density::KernelErrorDensity> density;  // FPLM and FNP only
};

struct Split {
  fda::FunctionalSample X, Z;
  Eigen::VectorXd y;
};

ModelRun run_model(Model model, const metric::SemiMetricSpec& spec, density::BandwidthMode mode,
                   const Split& train, const Split& test, const PipelineOptions& options);

struct MetricRecord {
  std::string model;
  std::string semimetric;
  std::string density;
  std::string bandwidth;
  std::string metric;
  double value = 0.0;
  int replication = -1;  // -1: average over successful replications
};

struct MetricReport {
  std::vector<MetricRecord> records;
  int replications = 0;
  std::size_t failures = 0;
  std::vector<std::string> failure_messages;

  /// Aggregate value; NaN when absent.
  double aggregate(std::string_view model, std::string_view semimetric, std::string_view density,
                   std::string_view bandwidth, std::string_view metric) const;
};

struct StudyConfig {
  std::vector<Model> models{Model::Fplm, Model::Fnp, Model::Fpcr};
  std::vector<metric::SemiMetricSpec> semimetrics{metric::SemiMetricSpec::derivative(2)};
  std::vector<ErrorKind> densities{ErrorKind::T5};
  std::vector<density::BandwidthMode> modes{density::BandwidthMode::Global};
  bool rough = false;
  double noise_range = 0.1;
  std::size_t n = 100;
  std::size_t holdout = 0;  // 0: same as n
  int replications = 20;
  std::uint64_t seed = 1;
  bool center_errors = true;
  PipelineOptions pipeline;
  int threads = 1;
};

MetricReport run_replication_study(const StudyConfig& config);

struct BootstrapConfig {
  std::vector<Model> models{Model::Fplm, Model::Fnp, Model::Fpcr};
  std::vector<metric::SemiMetricSpec> semimetrics{metric::SemiMetricSpec::derivative(2)};
  density::BandwidthMode mode = density::BandwidthMode::Global;
  int n_boot = 100;
  std::size_t n_train = 160;
  std::uint64_t seed = 1;
  PipelineOptions pipeline;
  int threads = 1;
};

/// Resample all triplets with replacement; the first n_train form the
/// training set and the rest the test set.
MetricReport bootstrap_study(const Split& data, const BootstrapConfig& config);

}  // namespace fplm::bench
