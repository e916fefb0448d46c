#include "fplm/bench.hpp"

#include "fplm/util.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <stdexcept>
#include <tuple>

namespace fplm::bench {

namespace {

constexpr double kPi = std::numbers::pi;

double normal_pdf(double x, double mu, double sd) { return density::normal_pdf((x - mu) / sd) / sd; }

struct Component {
  double weight, mu, sd;
};

const std::vector<Component>& mixture(ErrorKind kind) {
  static const std::vector<Component> skew_uni{{0.2, 0.0, 1.0}, {0.2, 0.5, 2.0 / 3.0}, {0.6, 13.0 / 12.0, 5.0 / 9.0}};
  static const std::vector<Component> skew_bi{{0.75, 0.0, 1.0}, {0.25, 1.5, 1.0 / 3.0}};
  if (kind == ErrorKind::SkewUnimodal) return skew_uni;
  if (kind == ErrorKind::SkewBimodal) return skew_bi;
  throw std::logic_error("t5 is not a normal mixture");
}

using Key = std::tuple<std::string, std::string, std::string, std::string, std::string>;

void aggregate_into(MetricReport& report, const std::vector<std::vector<MetricRecord>>& per_rep,
                    const std::map<std::string, std::string>& rename) {
  std::map<Key, std::pair<double, int>> sums;
  std::vector<Key> order;
  for (const auto& rep : per_rep)
    for (const auto& r : rep) {
      report.records.push_back(r);
      Key key{r.model, r.semimetric, r.density, r.bandwidth, r.metric};
      auto [it, fresh] = sums.try_emplace(key, 0.0, 0);
      if (fresh) order.push_back(key);
      it->second.first += r.value;
      it->second.second += 1;
    }
  for (const auto& key : order) {
    const auto& [sum, count] = sums.at(key);
    MetricRecord agg{std::get<0>(key), std::get<1>(key), std::get<2>(key), std::get<3>(key), std::get<4>(key),
                     sum / count, -1};
    if (auto it = rename.find(agg.metric); it != rename.end()) agg.metric = it->second;
    report.records.push_back(std::move(agg));
  }
}

std::string mode_label(density::BandwidthMode m) {
  return m == density::BandwidthMode::Global ? "global" : "localized";
}

}  // namespace

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::T5: return "t5";
    case ErrorKind::SkewUnimodal: return "skewunimodal";
    case ErrorKind::SkewBimodal: return "skewbimodal";
  }
  return "?";
}

ErrorKind parse_error_kind(std::string_view text) {
  if (text == "t5") return ErrorKind::T5;
  if (text == "skewunimodal") return ErrorKind::SkewUnimodal;
  if (text == "skewbimodal") return ErrorKind::SkewBimodal;
  throw std::invalid_argument("unknown error density '" + std::string(text) + "'");
}

double error_mean(ErrorKind kind) {
  if (kind == ErrorKind::T5) return 0.0;
  double m = 0.0;
  for (const auto& c : mixture(kind)) m += c.weight * c.mu;
  return m;
}

Eigen::VectorXd draw_errors(ErrorKind kind, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("draw_errors: n must be >= 1");
  auto rng = make_rng(seed, 0);
  Eigen::VectorXd e(static_cast<Eigen::Index>(n));
  if (kind == ErrorKind::T5) {
    std::student_t_distribution<double> t(5.0);
    for (auto& v : e) v = t(rng);
    return e;
  }
  const auto& comps = mixture(kind);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  for (auto& v : e) {
    const double pick = u(rng);
    double acc = 0.0;
    std::size_t k = 0;
    while (k + 1 < comps.size() && pick >= (acc += comps[k].weight)) ++k;
    v = comps[k].mu + comps[k].sd * z(rng);
  }
  return e;
}

double true_density(ErrorKind kind, double e) {
  if (kind == ErrorKind::T5) {
    const double norm = std::tgamma(3.0) / (std::sqrt(5.0 * kPi) * std::tgamma(2.5));
    return norm * std::pow(1.0 + e * e / 5.0, -3.0);
  }
  double f = 0.0;
  for (const auto& c : mixture(kind)) f += c.weight * normal_pdf(e, c.mu, c.sd);
  return f;
}

fda::Grid dgp_grid() { return fda::Grid::uniform(0.0, kPi, 100); }

DgpDraw curves_from_coefficients(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& c,
                                 const Eigen::MatrixXd* noise) {
  const Eigen::Index n = a.size();
  if (b.size() != n || c.size() != n || n < 1) throw std::invalid_argument("dgp: coefficient lengths differ");
  const auto grid = dgp_grid();
  const auto m = static_cast<Eigen::Index>(grid.size());
  if (noise && (noise->rows() != n || noise->cols() != m)) throw std::invalid_argument("dgp: noise shape");
  Eigen::MatrixXd X(n, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double t = grid[static_cast<std::size_t>(j)];
    const double p = t * t - kPi * t + 2.0 * kPi * kPi / 9.0;
    for (Eigen::Index i = 0; i < n; ++i) X(i, j) = a(i) * std::cos(2.0 * t) + b(i) * std::sin(4.0 * t) + c(i) * p;
  }
  if (noise) X += *noise;
  DgpDraw d;
  d.X = fda::FunctionalSample(grid, std::move(X));
  d.Z = fda::derivative(fda::fit_bsplines(d.X, 4, fda::default_interior_knots(grid.size())), 1);
  d.a = a;
  d.b = b;
  d.c = c;
  d.g = 10.0 * (a.array().square() - b.array().square()).matrix();
  return d;
}

DgpDraw simulate_smooth(std::size_t n, std::uint64_t seed) { return simulate_rough(n, seed, 0.0); }

DgpDraw simulate_rough(std::size_t n, std::uint64_t seed, double noise_range) {
  if (n < 2) throw std::invalid_argument("dgp: n must be >= 2");
  if (!(noise_range >= 0.0)) throw std::invalid_argument("dgp: noise range must be >= 0");
  auto rng = make_rng(seed, 0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto nn = static_cast<Eigen::Index>(n);
  Eigen::VectorXd a(nn), b(nn), c(nn);
  for (Eigen::Index i = 0; i < nn; ++i) {
    a(i) = u(rng);
    b(i) = u(rng);
    c(i) = u(rng);
  }
  if (noise_range == 0.0) return curves_from_coefficients(a, b, c);
  auto noise_rng = make_rng(seed, 1);
  std::uniform_real_distribution<double> d(-noise_range, noise_range);
  Eigen::MatrixXd noise(nn, static_cast<Eigen::Index>(dgp_grid().size()));
  for (Eigen::Index i = 0; i < noise.rows(); ++i)
    for (Eigen::Index j = 0; j < noise.cols(); ++j) noise(i, j) = d(noise_rng);
  return curves_from_coefficients(a, b, c, &noise);
}

double averaged_squared_error(std::span<const Replicate> reps) {
  double acc = 0.0;
  std::size_t count = 0;
  for (const auto& r : reps) {
    if (r.truth.size() != r.estimate.size()) throw std::invalid_argument("squared error: length mismatch");
    acc += (r.truth - r.estimate).squaredNorm();
    count += static_cast<std::size_t>(r.truth.size());
  }
  if (count == 0) throw std::invalid_argument("squared error: no values");
  return acc / static_cast<double>(count);
}

AmseAmspe amse_amspe(std::span<const Replicate> train, std::span<const Replicate> holdout) {
  return {averaged_squared_error(train), averaged_squared_error(holdout)};
}

MiseKl mise_kl(const std::function<double(double)>& truth, const std::function<double(double)>& estimate) {
  MiseKl out;
  for (int i = 0; i < 1001; ++i) {
    const double e = -10.0 + i / 50.0;
    const double f = truth(e);
    const double fh = estimate(e);
    out.mise += (f - fh) * (f - fh);
    out.kl -= f * std::log(std::max(fh, 1e-300));
  }
  out.mise /= 50.0;
  out.kl /= 50.0;
  return out;
}

MiseKl mise_kl(ErrorKind kind, const density::KernelErrorDensity& estimate, double shift) {
  return mise_kl([&](double e) { return true_density(kind, e + shift); },
                 [&](double e) { return estimate.density_at(e); });
}

double rmse(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  if (y.size() != yhat.size()) throw std::invalid_argument("rmse: length mismatch");
  if (y.size() == 0) throw std::invalid_argument("rmse: empty input");
  return std::sqrt((y - yhat).squaredNorm() / static_cast<double>(y.size()));
}

RmseRmspe rmse_rmspe(const Eigen::VectorXd& y_train, const Eigen::VectorXd& yhat_train, const Eigen::VectorXd& y_test,
                     const Eigen::VectorXd& yhat_test) {
  return {rmse(y_train, yhat_train), rmse(y_test, yhat_test)};
}

std::string_view to_string(Model m) {
  switch (m) {
    case Model::Fplm: return "fplm";
    case Model::Fnp: return "fnp";
    case Model::Fpcr: return "fpcr";
  }
  return "?";
}

Model parse_model(std::string_view text) {
  if (text == "fplm") return Model::Fplm;
  if (text == "fnp") return Model::Fnp;
  if (text == "fpcr") return Model::Fpcr;
  throw std::invalid_argument("unknown model '" + std::string(text) + "'");
}

std::string_view to_string(NpInput v) { return v == NpInput::Raw ? "raw" : "derivative"; }

NpInput parse_np_input(std::string_view text) {
  if (text == "raw") return NpInput::Raw;
  if (text == "derivative") return NpInput::Derivative;
  throw std::invalid_argument("unknown kernel input '" + std::string(text) + "'");
}

ModelRun run_model(Model model, const metric::SemiMetricSpec& spec, density::BandwidthMode mode, const Split& train,
                   const Split& test, const PipelineOptions& options) {
  ModelRun run;
  if (model == Model::Fpcr) {
    const auto fit = reg::fit_fpcr(train.X, train.y, options.fpcr_components);
    run.fitted = fit.fitted;
    run.residuals = fit.residuals;
    run.predictions = reg::predict_fpcr(fit, test.X);
    return run;
  }
  const bool raw = options.np_input == NpInput::Raw;
  const auto& np_train = raw ? train.X : train.Z;
  const auto& np_test = raw ? test.X : test.Z;
  const auto& cfg = options.mcmc;
  auto finish = [&](const bayes::McmcChain& chain, Eigen::VectorXd fitted, Eigen::VectorXd residuals,
                    Eigen::VectorXd predictions) {
    run.h = chain.h_hat();
    run.error_bandwidth = mode == density::BandwidthMode::Global
                              ? density::ErrorBandwidth::global(chain.error_hat())
                              : density::ErrorBandwidth::localized(chain.error_hat(), chain.mean.tau_eps);
    run.density.emplace(residuals, run.error_bandwidth);
    run.fitted = std::move(fitted);
    run.residuals = std::move(residuals);
    run.predictions = std::move(predictions);
  };
  if (model == Model::Fplm) {
    reg::FplmFitter fitter(reg::make_training(train.X, np_train, train.y, spec), options.fplm);
    bayes::BandwidthPosterior post(fitter, mode, cfg.prior_h, cfg.prior_error);
    const auto chain = bayes::run_sampler(post, cfg);
    auto fit = fitter.fit(chain.h_hat());
    auto pred = reg::predict_fplm(fit, test.X, np_test);
    finish(chain, std::move(fit.fitted), std::move(fit.residuals), std::move(pred));
  } else {
    reg::FnpFitter fitter(reg::make_training(np_train, np_train, train.y, spec));
    bayes::BandwidthPosterior post(fitter, mode, cfg.prior_h, cfg.prior_error);
    const auto chain = bayes::run_sampler(post, cfg);
    auto fit = fitter.fit(chain.h_hat());
    auto pred = reg::predict_fnp(fit, np_test);
    finish(chain, std::move(fit.fitted), std::move(fit.residuals), std::move(pred));
  }
  return run;
}

double MetricReport::aggregate(std::string_view model, std::string_view semimetric, std::string_view density,
                               std::string_view bandwidth, std::string_view metric) const {
  for (const auto& r : records)
    if (r.replication == -1 && r.model == model && r.semimetric == semimetric && r.density == density &&
        r.bandwidth == bandwidth && r.metric == metric)
      return r.value;
  return std::numeric_limits<double>::quiet_NaN();
}

MetricReport run_replication_study(const StudyConfig& config) {
  if (config.replications < 1) throw std::invalid_argument("replication study: B must be >= 1");
  const std::size_t n = config.n;
  const std::size_t eta = config.holdout == 0 ? n : config.holdout;
  const auto B = static_cast<std::size_t>(config.replications);

  std::vector<std::vector<MetricRecord>> per_rep(B);
  std::vector<std::vector<std::string>> failures(B);
  parallel_for(B, config.threads, [&](std::size_t s) {
    const std::uint64_t rep_seed = derive_seed(config.seed, s);
    DgpDraw draw;
    try {
      draw = config.rough ? simulate_rough(n + eta, rep_seed, config.noise_range) : simulate_smooth(n + eta, rep_seed);
    } catch (const std::exception& e) {
      failures[s].push_back("replication " + std::to_string(s) + ": " + e.what());
      return;
    }
    const auto X_tr = draw.X.head(n), X_te = draw.X.tail_from(n);
    const auto Z_tr = draw.Z.head(n), Z_te = draw.Z.tail_from(n);
    const Eigen::VectorXd g_tr = draw.g.head(static_cast<Eigen::Index>(n));
    const Eigen::VectorXd g_te = draw.g.tail(static_cast<Eigen::Index>(eta));
    std::uint64_t stream = 0;
    for (const auto kind : config.densities) {
      const double shift = config.center_errors ? error_mean(kind) : 0.0;
      const Eigen::VectorXd eps =
          draw_errors(kind, n + eta, derive_seed(rep_seed, 1000 + static_cast<std::uint64_t>(kind))).array() - shift;
      const Eigen::VectorXd y = draw.g + eps;
      const Split train{X_tr, Z_tr, y.head(static_cast<Eigen::Index>(n))};
      const Split test{X_te, Z_te, y.tail(static_cast<Eigen::Index>(eta))};
      for (const auto model : config.models) {
        const bool kernel = model != Model::Fpcr;
        const auto specs = kernel ? config.semimetrics : std::vector<metric::SemiMetricSpec>{config.semimetrics.front()};
        const auto modes = kernel ? config.modes : std::vector<density::BandwidthMode>{config.modes.front()};
        for (const auto& spec : specs)
          for (const auto mode : modes) {
            PipelineOptions opts = config.pipeline;
            opts.mcmc.seed = derive_seed(rep_seed, ++stream);
            MetricRecord base{std::string(to_string(model)), kernel ? spec.label() : "-", std::string(to_string(kind)),
                              kernel ? mode_label(mode) : "-", "", 0.0, static_cast<int>(s)};
            try {
              const auto run = run_model(model, spec, mode, train, test, opts);
              auto push = [&](const char* metric, double v) {
                auto r = base;
                r.metric = metric;
                r.value = v;
                per_rep[s].push_back(std::move(r));
              };
              push("mse", (g_tr - run.fitted).squaredNorm() / static_cast<double>(n));
              push("mspe", (g_te - run.predictions).squaredNorm() / static_cast<double>(eta));
              if (run.density) {
                const auto mk = mise_kl(kind, *run.density, shift);
                push("mise", mk.mise);
                push("kl", mk.kl);
              }
            } catch (const std::exception& e) {
              failures[s].push_back("replication " + std::to_string(s) + " " + base.model + " " + base.semimetric +
                                    " " + base.density + " " + base.bandwidth + ": " + e.what());
            }
          }
      }
    }
  });

  MetricReport report;
  report.replications = config.replications;
  aggregate_into(report, per_rep, {{"mse", "amse"}, {"mspe", "amspe"}, {"mise", "amise"}, {"kl", "akl"}});
  for (auto& f : failures)
    for (auto& msg : f) report.failure_messages.push_back(std::move(msg));
  report.failures = report.failure_messages.size();
  return report;
}

MetricReport bootstrap_study(const Split& data, const BootstrapConfig& config) {
  const std::size_t N = data.X.n();
  if (N < 2) throw std::invalid_argument("bootstrap: need at least two observations");
  if (config.n_boot < 1) throw std::invalid_argument("bootstrap: n_boot must be >= 1");
  if (config.n_train < 1 || config.n_train >= N) throw std::invalid_argument("bootstrap: bad training size");
  const auto R = static_cast<std::size_t>(config.n_boot);
  std::vector<std::vector<MetricRecord>> per_rep(R);
  std::vector<std::vector<std::string>> failures(R);
  parallel_for(R, config.threads, [&](std::size_t s) {
    auto rng = make_rng(config.seed, s);
    std::uniform_int_distribution<std::size_t> pick(0, N - 1);
    std::vector<std::size_t> idx(N);
    for (auto& i : idx) i = pick(rng);
    const std::span<const std::size_t> tr(idx.data(), config.n_train);
    const std::span<const std::size_t> te(idx.data() + config.n_train, N - config.n_train);
    auto take = [&](std::span<const std::size_t> rows) {
      Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
      for (std::size_t k = 0; k < rows.size(); ++k) y(static_cast<Eigen::Index>(k)) = data.y(static_cast<Eigen::Index>(rows[k]));
      return Split{data.X.rows(rows), data.Z.rows(rows), std::move(y)};
    };
    const Split train = take(tr), test = take(te);
    std::uint64_t stream = 0;
    for (const auto model : config.models) {
      const bool kernel = model != Model::Fpcr;
      const auto specs = kernel ? config.semimetrics : std::vector<metric::SemiMetricSpec>{config.semimetrics.front()};
      for (const auto& spec : specs) {
        PipelineOptions opts = config.pipeline;
        opts.mcmc.seed = derive_seed(derive_seed(config.seed, s), ++stream);
        MetricRecord base{std::string(to_string(model)), kernel ? spec.label() : "-", "tecator",
                          kernel ? mode_label(config.mode) : "-", "", 0.0, static_cast<int>(s)};
        try {
          const auto run = run_model(model, spec, config.mode, train, test, opts);
          const auto rr = rmse_rmspe(train.y, run.fitted, test.y, run.predictions);
          auto r1 = base;
          r1.metric = "rmse";
          r1.value = rr.rmse;
          auto r2 = base;
          r2.metric = "rmspe";
          r2.value = rr.rmspe;
          per_rep[s].push_back(std::move(r1));
          per_rep[s].push_back(std::move(r2));
        } catch (const std::exception& e) {
          failures[s].push_back("resample " + std::to_string(s) + " " + base.model + " " + base.semimetric + ": " +
                                e.what());
        }
      }
    }
  });
  MetricReport report;
  report.replications = config.n_boot;
  aggregate_into(report, per_rep, {});
  for (auto& f : failures)
    for (auto& msg : f) report.failure_messages.push_back(std::move(msg));
  report.failures = report.failure_messages.size();
  return report;
}

}  // namespace fplm::bench
