#include "fplm/cli.hpp"

#include "fplm/bayes.hpp"
#include "fplm/bench.hpp"
#include "fplm/io.hpp"
#include "fplm/util.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

namespace fplm::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Options {
  std::string input;
  std::string fit_path;
  std::string out = ".";
  std::vector<std::string> semimetrics;
  std::vector<std::string> modes{"global"};
  std::string prior = "1,0.05";
  int iters = 10000;
  int burnin = 1000;
  std::uint64_t seed = 0;
  std::optional<double> level;
  std::string model = "fplm";
  std::vector<std::string> models;
  std::string np_input = "raw";
  int n_pc = 3;
  int threads = 1;
  std::size_t n_train = 0;
  bool in_sample = false;
  // simulate / bench
  std::string dgp = "smooth";
  std::size_t n = 100;
  std::size_t holdout = 0;
  int replications = 20;
  std::vector<std::string> densities{"t5"};
  double noise_range = 0.1;
  std::string tecator;
  int bootstrap = 0;
};

const CLI::Validator kDataFile(
    [](std::string& path) {
      const auto resolved = io::resolve_data_path(path);
      if (!fs::is_regular_file(resolved)) return "file not found: " + path;
      path = resolved.string();
      return std::string();
    },
    "FILE");

const CLI::Validator kSemiMetric(
    [](std::string& text) {
      try {
        metric::SemiMetricSpec::parse(text);
      } catch (const std::exception& e) {
        return std::string(e.what());
      }
      return std::string();
    },
    "deriv:q|fpca:K|l2");

std::string json_dump(const json& j) { return j.dump(2) + "\n"; }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

json to_json(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Eigen::VectorXd vector_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(to_json(m.row(i).transpose()));
  return rows;
}

Eigen::MatrixXd matrix_from(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return {};
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto r = vector_from(j[static_cast<std::size_t>(i)]);
    if (r.size() != cols) throw std::runtime_error("fit artifact: ragged matrix");
    m.row(i) = r.transpose();
  }
  return m;
}

bayes::InverseGammaPrior parse_prior(const std::string& text) {
  const auto comma = text.find(',');
  try {
    if (comma == std::string::npos) throw std::invalid_argument("");
    bayes::InverseGammaPrior p{io::parse_double(text.substr(0, comma)), io::parse_double(text.substr(comma + 1))};
    p.validate();
    return p;
  } catch (const std::exception&) {
    throw UsageError("--prior expects two positive numbers 'shape,scale', got '" + text + "'");
  }
}

density::BandwidthMode parse_mode(const std::string& text) {
  if (text == "global") return density::BandwidthMode::Global;
  if (text == "localized") return density::BandwidthMode::Localized;
  throw UsageError("unknown bandwidth mode '" + text + "'");
}

std::string mode_name(density::BandwidthMode m) { return m == density::BandwidthMode::Global ? "global" : "localized"; }

bayes::McmcConfig mcmc_config(const Options& o, density::BandwidthMode mode) {
  bayes::McmcConfig c;
  c.burn_in = o.burnin;
  c.iterations = o.iters;
  c.seed = o.seed;
  c.mode = mode;
  c.prior_h = parse_prior(o.prior);
  c.prior_error = c.prior_h;
  if (c.iterations < 100) throw UsageError("--iters must be at least 100");
  if (c.burn_in < 0) throw UsageError("--burnin must be >= 0");
  return c;
}

reg::FplmOptions fplm_options(const Options& o) {
  reg::FplmOptions f;
  f.n_pc_beta = o.n_pc;
  if (o.n_pc < 0) throw UsageError("--n-pc must be >= 0");
  return f;
}

bench::NpInput parse_np_input(const std::string& text) {
  try {
    return bench::parse_np_input(text);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

std::vector<metric::SemiMetricSpec> specs_of(const std::vector<std::string>& texts) {
  std::vector<metric::SemiMetricSpec> out;
  for (const auto& t : texts) out.push_back(metric::SemiMetricSpec::parse(t));
  return out;
}

json prior_json(const bayes::InverseGammaPrior& p) { return {{"shape", p.shape}, {"scale", p.scale}}; }

json summary_json(const bayes::PosteriorSummary& s) {
  json params = json::array();
  for (const auto& p : s.parameters)
    params.push_back({{"name", p.name},
                      {"mean", p.mean},
                      {"sd", p.sd},
                      {"ci_lower", p.ci_lower},
                      {"ci_upper", p.ci_upper},
                      {"naive_se", p.naive_se},
                      {"batch_se", p.batch_se},
                      {"sif", p.sif},
                      {"acf", p.acf}});
  json acc = {{"h", s.acceptance_h}, {"error", s.acceptance_e}};
  if (s.parameters.size() == 3) acc["tau_eps"] = s.acceptance_tau_eps;
  return {{"draws", s.draws}, {"acceptance", acc}, {"parameters", params}};
}

json chib_json(const bayes::ChibResult& c) {
  return {{"log_marginal_likelihood", c.log_marginal},
          {"log_likelihood", c.log_likelihood},
          {"log_prior", c.log_prior},
          {"log_posterior_ordinate", c.log_posterior_ordinate}};
}

json error_bandwidth_json(const density::ErrorBandwidth& bw) {
  json j = {{"mode", mode_name(bw.mode)}, {"scale", bw.scale}};
  if (bw.mode == density::BandwidthMode::Localized) j["tau_eps"] = bw.tau_eps;
  return j;
}

io::Table chain_table(const bayes::McmcChain& chain) {
  const bool loc = chain.mode == density::BandwidthMode::Localized;
  io::Table t;
  t.columns = {"draw", "h2", "e2"};
  if (loc) t.columns.push_back("tau_eps");
  t.columns.insert(t.columns.end(), {"log_posterior", "accepted_h", "accepted_e"});
  if (loc) t.columns.push_back("accepted_tau_eps");
  for (std::size_t k = 0; k < chain.size(); ++k) {
    std::vector<std::string> r{std::to_string(k + 1), io::format_double(chain.h2[k]), io::format_double(chain.e2[k])};
    if (loc) r.push_back(io::format_double(chain.tau_eps[k]));
    r.push_back(io::format_double(chain.log_post[k]));
    r.push_back(std::to_string(chain.accepted_h[k]));
    r.push_back(std::to_string(chain.accepted_e[k]));
    if (loc) r.push_back(std::to_string(chain.accepted_tau_eps[k]));
    t.rows.push_back(std::move(r));
  }
  return t;
}

io::Table density_table(const density::KernelErrorDensity& d) {
  io::Table t;
  t.columns = {"e", "density"};
  for (const auto& [e, f] : d.curve()) t.rows.push_back({io::format_double(e), io::format_double(f)});
  return t;
}

struct Interval {
  double lower, upper;
};

/// Predictions table; intervals and coverage when a level is given.
io::Table prediction_table(const Eigen::VectorXd& yhat, const std::optional<Eigen::VectorXd>& y,
                           const std::vector<Interval>& iv, std::size_t& covered) {
  io::Table t;
  t.columns = {"unit", "yhat"};
  if (!iv.empty()) t.columns.insert(t.columns.end(), {"lower", "upper"});
  if (y) t.columns.push_back("y");
  if (y && !iv.empty()) t.columns.push_back("covered");
  covered = 0;
  for (Eigen::Index i = 0; i < yhat.size(); ++i) {
    std::vector<std::string> r{std::to_string(i + 1), io::format_double(yhat(i))};
    const auto k = static_cast<std::size_t>(i);
    if (!iv.empty()) {
      r.push_back(io::format_double(iv[k].lower));
      r.push_back(io::format_double(iv[k].upper));
    }
    if (y) r.push_back(io::format_double((*y)(i)));
    if (y && !iv.empty()) {
      const bool in = (*y)(i) >= iv[k].lower && (*y)(i) <= iv[k].upper;
      covered += in;
      r.push_back(in ? "1" : "0");
    }
    t.rows.push_back(std::move(r));
  }
  return t;
}

std::vector<Interval> intervals(const density::KernelErrorDensity& d, const Eigen::VectorXd& yhat, double level) {
  std::vector<Interval> out;
  const double lo = d.quantile((1.0 - level) / 2.0), hi = d.quantile((1.0 + level) / 2.0);
  for (Eigen::Index i = 0; i < yhat.size(); ++i) out.push_back({yhat(i) + lo, yhat(i) + hi});
  return out;
}

double check_level(double level) {
  if (!(level > 0.0 && level < 1.0)) throw UsageError("--level must lie in (0, 1)");
  return level;
}

fs::path prepare_out(const std::string& out) {
  fs::path p(out);
  fs::create_directories(p);
  return p;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const Options& o, std::ostream& log) {
  if (o.n < 2) throw UsageError("--n must be >= 2");
  const auto kind = bench::parse_error_kind(o.densities.front());
  const auto draw = o.dgp == "rough" ? bench::simulate_rough(o.n, o.seed, o.noise_range) : bench::simulate_smooth(o.n, o.seed);
  const Eigen::VectorXd eps = bench::draw_errors(kind, o.n, derive_seed(o.seed, 1)).array() - bench::error_mean(kind);
  const auto data = io::make_dataset(draw.X, draw.g + eps, draw.g);
  const auto dir = prepare_out(o.out);
  io::write_dataset_csv(dir / "data.csv", data);
  log << "simulated " << o.n << " " << o.dgp << " curves with " << o.densities.front() << " errors -> "
      << (dir / "data.csv").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- fit

struct Split {
  io::Dataset train;
  std::optional<io::Dataset> test;
};

Split split_rows(const io::Dataset& data, std::size_t n_train) {
  const std::size_t n = data.n();
  if (n_train == 0) n_train = n;
  if (n_train > n) throw UsageError("--n-train " + std::to_string(n_train) + " exceeds the " + std::to_string(n) + " records");
  if (n_train < 4) throw UsageError("--n-train must be at least 4");
  Split s{data.rows(0, n_train), std::nullopt};
  if (n_train < n) s.test = data.rows(n_train, n - n_train);
  return s;
}

int cmd_fit(const Options& o, std::ostream& log) {
  if (o.semimetrics.size() > 1) throw UsageError("fit takes a single --semimetric");
  const auto spec = metric::SemiMetricSpec::parse(o.semimetrics.empty() ? "deriv:2" : o.semimetrics.front());
  const auto mode = parse_mode(o.modes.front());
  const auto cfg = mcmc_config(o, mode);
  const auto np = parse_np_input(o.np_input);
  const auto fopts = fplm_options(o);
  const double level = check_level(o.level.value_or(0.8));
  if (o.model != "fplm" && o.model != "fnp") throw UsageError("fit supports --model fplm or fnp");
  const bool fplm = o.model == "fplm";

  const auto data = io::read_dataset(o.input);
  const auto [train, test] = split_rows(data, o.n_train);
  const bool raw = np == bench::NpInput::Raw;
  const auto& z_train = raw ? train.X : train.Z;

  bayes::McmcChain chain;
  bayes::ChibResult chib;
  Eigen::VectorXd fitted, residuals, beta, yhat_test;
  int n_pc_used = 0;
  std::vector<std::string> warnings;
  double h = 0.0;
  auto training = reg::make_training(train.X, z_train, train.y, spec);
  if (fplm) {
    reg::FplmFitter fitter(training, fopts);
    bayes::BandwidthPosterior post(fitter, mode, cfg.prior_h, cfg.prior_error);
    chain = bayes::run_sampler(post, cfg);
    chib = bayes::chib_marginal_likelihood(chain, post);
    h = chain.h_hat();
    const auto fit = fitter.fit(h);
    fitted = fit.fitted;
    residuals = fit.residuals;
    beta = fit.beta;
    n_pc_used = fit.n_pc_beta;
    warnings = fit.warnings;
    if (test) yhat_test = reg::predict_fplm(fit, test->X, raw ? test->X : test->Z);
  } else {
    reg::FnpFitter fitter(training);
    bayes::BandwidthPosterior post(fitter, mode, cfg.prior_h, cfg.prior_error);
    chain = bayes::run_sampler(post, cfg);
    chib = bayes::chib_marginal_likelihood(chain, post);
    h = chain.h_hat();
    const auto fit = fitter.fit(h);
    fitted = fit.fitted;
    residuals = fit.residuals;
    if (test) yhat_test = reg::predict_fnp(fit, raw ? test->X : test->Z);
  }
  const auto bw = mode == density::BandwidthMode::Global
                      ? density::ErrorBandwidth::global(chain.error_hat())
                      : density::ErrorBandwidth::localized(chain.error_hat(), chain.mean.tau_eps);
  const density::KernelErrorDensity dens(residuals, bw);
  const auto post_summary = bayes::diagnostics(chain);

  const auto dir = prepare_out(o.out);
  json summary = {{"model", o.model},
                  {"semimetric", spec.label()},
                  {"np_input", std::string(bench::to_string(np))},
                  {"bandwidth_mode", mode_name(mode)},
                  {"seed", o.seed},
                  {"iterations", cfg.iterations},
                  {"burn_in", cfg.burn_in},
                  {"prior", prior_json(cfg.prior_h)},
                  {"n_train", train.n()},
                  {"n_test", test ? test->n() : 0},
                  {"h", h},
                  {"error_bandwidth", error_bandwidth_json(bw)},
                  {"posterior", summary_json(post_summary)},
                  {"marginal_likelihood", chib_json(chib)},
                  {"rmse", bench::rmse(train.y, fitted)}};
  if (fplm) {
    summary["n_pc_beta"] = n_pc_used;
    summary["warnings"] = warnings;
  }
  if (test) {
    const auto iv = intervals(dens, yhat_test, level);
    std::size_t covered = 0;
    io::write_csv(dir / "predictions.csv", prediction_table(yhat_test, test->y, iv, covered));
    summary["rmspe"] = bench::rmse(test->y, yhat_test);
    summary["interval_level"] = level;
    summary["coverage"] = static_cast<double>(covered) / static_cast<double>(test->n());
  }
  write_text(dir / "summary.json", json_dump(summary));
  io::write_csv(dir / "chain.csv", chain_table(chain));
  io::write_csv(dir / "density.csv", density_table(dens));

  io::Table ft;
  ft.columns = {"unit", "y", "fitted", "residual"};
  for (Eigen::Index i = 0; i < fitted.size(); ++i)
    ft.rows.push_back({std::to_string(i + 1), io::format_double(train.y(i)), io::format_double(fitted(i)),
                       io::format_double(residuals(i))});
  io::write_csv(dir / "fitted.csv", ft);
  if (fplm) {
    io::Table bt;
    bt.columns = {"t", "beta", "beta_mean"};
    const auto& g = train.X.grid();
    for (std::size_t j = 0; j < g.size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      bt.rows.push_back({io::format_double(g[j]), io::format_double(beta(jj)), io::format_double(chain.mean_beta(jj))});
    }
    io::write_csv(dir / "beta.csv", bt);
  }

  const auto& grid = train.X.grid();
  json artifact = {{"format", "fplm-fit"},
                   {"version", 1},
                   {"model", o.model},
                   {"semimetric", spec.label()},
                   {"np_input", std::string(bench::to_string(np))},
                   {"n_pc_beta", fopts.n_pc_beta},
                   {"h", h},
                   {"error_bandwidth", error_bandwidth_json(bw)},
                   {"grid", {{"lo", grid.support_lo()}, {"hi", grid.support_hi()}, {"points", grid.points()}}},
                   {"X", matrix_to_json(train.X.values())},
                   {"Z", matrix_to_json(train.Z.values())},
                   {"y", to_json(train.y)},
                   {"fitted", to_json(fitted)},
                   {"residuals", to_json(residuals)}};
  if (fplm) artifact["beta"] = to_json(beta);
  write_text(dir / "fit.json", json_dump(artifact));

  log << o.model << " " << spec.label() << " " << mode_name(mode) << ": h = " << h << ", error bandwidth = "
      << bw.scale << ", LML = " << chib.log_marginal << ", RMSE = " << summary["rmse"].get<double>();
  if (test) log << ", RMSPE = " << summary["rmspe"].get<double>() << ", coverage@" << level << " = "
                << summary["coverage"].get<double>();
  log << "\n";
  return 0;
}

// ---------------------------------------------------------------- predict

int cmd_predict(const Options& o, std::ostream& log) {
  const std::optional<double> level = o.level ? std::optional(check_level(*o.level)) : std::nullopt;
  json a;
  {
    std::ifstream f(o.fit_path);
    if (!f) throw std::runtime_error("cannot open " + o.fit_path);
    try {
      a = json::parse(f);
    } catch (const json::exception& e) {
      throw std::runtime_error(o.fit_path + ": not a fit artifact (" + e.what() + ")");
    }
  }
  if (a.value("format", "") != "fplm-fit") throw std::runtime_error(o.fit_path + ": not a fit artifact");
  const auto& g = a.at("grid");
  const fda::Grid grid(g.at("points").get<std::vector<double>>(), g.at("lo").get<double>(), g.at("hi").get<double>());
  const fda::FunctionalSample X(grid, matrix_from(a.at("X"))), Z(grid, matrix_from(a.at("Z")));
  const Eigen::VectorXd y = vector_from(a.at("y"));
  const auto spec = metric::SemiMetricSpec::parse(a.at("semimetric").get<std::string>());
  const bool raw = bench::parse_np_input(a.at("np_input").get<std::string>()) == bench::NpInput::Raw;
  const double h = a.at("h").get<double>();
  const auto& eb = a.at("error_bandwidth");
  const auto bw = parse_mode(eb.at("mode").get<std::string>()) == density::BandwidthMode::Global
                      ? density::ErrorBandwidth::global(eb.at("scale").get<double>())
                      : density::ErrorBandwidth::localized(eb.at("scale").get<double>(), eb.at("tau_eps").get<double>());
  const density::KernelErrorDensity dens(vector_from(a.at("residuals")), bw);

  const auto data = io::read_dataset(o.input);
  if (!data.X.grid().same_points(grid))
    throw std::runtime_error(o.input + ": curve grid does not match the fitted model (" + std::to_string(data.X.m()) +
                             " vs " + std::to_string(grid.size()) + " points)");
  std::vector<std::ptrdiff_t> exclude;
  if (o.in_sample) {
    if (data.n() != X.n()) throw UsageError("--in-sample needs the training curves (" + std::to_string(X.n()) + " rows)");
    exclude.resize(data.n());
    for (std::size_t i = 0; i < data.n(); ++i) exclude[i] = static_cast<std::ptrdiff_t>(i);
  }
  auto training = reg::make_training(X, raw ? X : Z, y, spec);
  Eigen::VectorXd yhat;
  const auto& z_new = raw ? data.X : data.Z;
  if (a.at("model") == "fplm") {
    reg::FplmOptions fo;
    fo.n_pc_beta = a.at("n_pc_beta").get<int>();
    const reg::FplmFitter fitter(training, fo);
    yhat = reg::predict_fplm(fitter.with_beta(vector_from(a.at("beta")), h), data.X, z_new, exclude);
  } else {
    const reg::FnpFitter fitter(training);
    yhat = reg::predict_fnp(fitter.fit(h), z_new, exclude);
  }
  const auto iv = level ? intervals(dens, yhat, *level) : std::vector<Interval>{};
  std::size_t covered = 0;
  const auto table = prediction_table(yhat, data.y, iv, covered);
  const auto dir = prepare_out(o.out);
  io::write_csv(dir / "predictions.csv", table);
  log << "predicted " << data.n() << " units -> " << (dir / "predictions.csv").string();
  log << ", RMSPE = " << bench::rmse(data.y, yhat);
  if (level) log << ", coverage@" << *level << " = " << static_cast<double>(covered) / static_cast<double>(data.n());
  log << "\n";
  return 0;
}

// ---------------------------------------------------------------- select-semimetric

int cmd_select(const Options& o, std::ostream& log) {
  const auto texts = o.semimetrics.empty() ? std::vector<std::string>{"deriv:1", "deriv:2", "fpca:3"} : o.semimetrics;
  if (texts.size() < 2) throw UsageError("select-semimetric needs at least two --semimetric candidates");
  const auto specs = specs_of(texts);
  const auto mode = parse_mode(o.modes.front());
  const auto cfg = mcmc_config(o, mode);
  const bool raw = parse_np_input(o.np_input) == bench::NpInput::Raw;
  const auto fopts = fplm_options(o);
  const auto data = io::read_dataset(o.input);
  const auto train = split_rows(data, o.n_train).train;

  const bayes::SelectionData sd{train.X, raw ? train.X : train.Z, train.y, fopts};
  const auto results = bayes::select_semimetric(specs, sd, cfg, o.threads);

  io::Table t;
  t.columns = {"rank", "semimetric", "ok", "log_marginal_likelihood", "log_bayes_factor", "h", "error_bandwidth", "error"};
  json rows = json::array();
  std::size_t ok = 0;
  for (const auto& r : results) {
    ok += r.ok;
    const double hh = r.ok ? std::sqrt(r.chib.at.h2) : std::nan("");
    const double bb = r.ok ? std::sqrt(r.chib.at.e2) : std::nan("");
    t.rows.push_back({std::to_string(r.rank), r.spec.label(), r.ok ? "1" : "0",
                      r.ok ? io::format_double(r.chib.log_marginal) : "nan",
                      r.ok ? io::format_double(r.log_bayes_factor) : "nan", r.ok ? io::format_double(hh) : "nan",
                      r.ok ? io::format_double(bb) : "nan", r.error});
    json row = {{"rank", r.rank}, {"semimetric", r.spec.label()}, {"ok", r.ok}};
    if (r.ok) {
      row["marginal_likelihood"] = chib_json(r.chib);
      row["log_bayes_factor"] = r.log_bayes_factor;
      row["h"] = hh;
      row["error_bandwidth"] = bb;
      row["posterior"] = summary_json(r.summary);
    } else {
      row["error"] = r.error;
    }
    rows.push_back(std::move(row));
  }
  const auto dir = prepare_out(o.out);
  io::write_csv(dir / "selection.csv", t);
  write_text(dir / "selection.json", json_dump({{"seed", o.seed},
                                                {"bandwidth_mode", mode_name(mode)},
                                                {"iterations", cfg.iterations},
                                                {"burn_in", cfg.burn_in},
                                                {"prior", prior_json(cfg.prior_h)},
                                                {"n_train", train.n()},
                                                {"candidates", rows}}));
  log << std::left << std::setw(6) << "rank" << std::setw(12) << "semimetric" << std::setw(14) << "LML"
      << "log BF\n";
  for (const auto& r : results) {
    log << std::setw(6) << r.rank << std::setw(12) << r.spec.label();
    if (r.ok)
      log << std::setw(14) << r.chib.log_marginal << r.log_bayes_factor << "\n";
    else
      log << "failed: " << r.error << "\n";
  }
  return ok > 0 ? 0 : 1;
}

// ---------------------------------------------------------------- bench

io::Table report_table(const bench::MetricReport& r) {
  io::Table t;
  t.columns = {"model", "semimetric", "density", "bandwidth", "metric", "value", "replication"};
  for (const auto& m : r.records)
    t.rows.push_back({m.model, m.semimetric, m.density, m.bandwidth, m.metric, io::format_double(m.value),
                      m.replication < 0 ? "all" : std::to_string(m.replication + 1)});
  return t;
}

int cmd_bench(const Options& o, std::ostream& log) {
  bench::PipelineOptions pipe;
  pipe.mcmc = mcmc_config(o, density::BandwidthMode::Global);
  pipe.fplm = fplm_options(o);
  pipe.np_input = parse_np_input(o.np_input);
  std::vector<bench::Model> models;
  for (const auto& m : o.models.empty() ? std::vector<std::string>{"fplm", "fnp", "fpcr"} : o.models)
    models.push_back(bench::parse_model(m));
  const auto specs = specs_of(o.semimetrics.empty() ? std::vector<std::string>{"deriv:2"} : o.semimetrics);
  std::vector<density::BandwidthMode> modes;
  for (const auto& m : o.modes) {
    if (m == "both") {
      modes = {density::BandwidthMode::Global, density::BandwidthMode::Localized};
      break;
    }
    modes.push_back(parse_mode(m));
  }

  bench::MetricReport report;
  json meta = {{"seed", o.seed}, {"iterations", pipe.mcmc.iterations}, {"burn_in", pipe.mcmc.burn_in},
               {"prior", prior_json(pipe.mcmc.prior_h)}};
  if (!o.tecator.empty() || o.bootstrap > 0) {
    if (o.tecator.empty()) throw UsageError("--bootstrap needs --tecator FILE");
    if (o.bootstrap < 1) throw UsageError("--tecator needs --bootstrap K with K >= 1");
    if (modes.size() != 1) throw UsageError("bootstrap runs take one --bandwidth-mode");
    const auto data = io::read_dataset(o.tecator);
    bench::BootstrapConfig bc;
    bc.models = models;
    bc.semimetrics = specs;
    bc.mode = modes.front();
    bc.n_boot = o.bootstrap;
    bc.n_train = o.n_train ? o.n_train : 160;
    bc.seed = o.seed;
    bc.pipeline = pipe;
    bc.threads = o.threads;
    if (bc.n_train >= data.n()) throw UsageError("--n-train must be smaller than the number of records");
    report = bench::bootstrap_study({data.X, data.Z, data.y}, bc);
    meta["study"] = "bootstrap";
    meta["n_train"] = bc.n_train;
    meta["n_test"] = data.n() - bc.n_train;
  } else {
    if (o.replications < 1) throw UsageError("--B must be >= 1");
    if (o.n < 4) throw UsageError("--n must be >= 4");
    bench::StudyConfig sc;
    sc.models = models;
    sc.semimetrics = specs;
    sc.densities.clear();
    for (const auto& d : o.densities) sc.densities.push_back(bench::parse_error_kind(d));
    sc.modes = modes;
    sc.rough = o.dgp == "rough";
    sc.noise_range = o.noise_range;
    sc.n = o.n;
    sc.holdout = o.holdout;
    sc.replications = o.replications;
    sc.seed = o.seed;
    sc.pipeline = pipe;
    sc.threads = o.threads;
    report = bench::run_replication_study(sc);
    meta["study"] = "replication";
    meta["dgp"] = o.dgp;
    meta["n"] = o.n;
    meta["holdout"] = o.holdout ? o.holdout : o.n;
  }
  meta["replications"] = report.replications;
  meta["failures"] = report.failures;
  meta["failure_messages"] = report.failure_messages;
  json agg = json::array();
  for (const auto& r : report.records)
    if (r.replication < 0)
      agg.push_back({{"model", r.model},
                     {"semimetric", r.semimetric},
                     {"density", r.density},
                     {"bandwidth", r.bandwidth},
                     {"metric", r.metric},
                     {"value", r.value}});
  meta["aggregates"] = agg;

  const auto dir = prepare_out(o.out);
  io::write_csv(dir / "report.csv", report_table(report));
  write_text(dir / "report.json", json_dump(meta));

  log << std::left << std::setw(6) << "model" << std::setw(12) << "semimetric" << std::setw(14) << "density"
      << std::setw(11) << "bandwidth" << std::setw(8) << "metric" << "value\n";
  for (const auto& r : report.records)
    if (r.replication < 0)
      log << std::setw(6) << r.model << std::setw(12) << r.semimetric << std::setw(14) << r.density << std::setw(11)
          << r.bandwidth << std::setw(8) << r.metric << r.value << "\n";
  log << report.replications << " replications, " << report.failures << " failures\n";
  for (const auto& m : report.failure_messages) log << "  " << m << "\n";
  return report.failures > 0 && agg.empty() ? 1 : 0;
}

// ---------------------------------------------------------------- wiring

void add_sampler_options(CLI::App* sub, Options& o, bool repeat_mode) {
  sub->add_option("--iters", o.iters, "retained MCMC iterations")->capture_default_str();
  sub->add_option("--burnin", o.burnin, "burn-in iterations")->capture_default_str();
  sub->add_option("--prior", o.prior, "inverse-gamma prior 'shape,scale' on h^2 and the error bandwidth^2")
      ->capture_default_str();
  auto* mode = sub->add_option("--bandwidth-mode", o.modes, repeat_mode ? "global, localized or both" : "global or localized")
                   ->capture_default_str();
  mode->check(repeat_mode ? CLI::IsMember({"global", "localized", "both"}) : CLI::IsMember({"global", "localized"}));
  if (!repeat_mode) mode->expected(1);
  sub->add_option("--np-input", o.np_input, "curves seen by the kernel part: raw or derivative")
      ->check(CLI::IsMember({"raw", "derivative"}))
      ->capture_default_str();
  sub->add_option("--n-pc", o.n_pc, "principal components for beta (0: variance rule)")->capture_default_str();
  sub->add_option("--seed", o.seed, "random seed")->required();
}

void add_semimetric_option(CLI::App* sub, Options& o, const char* help) {
  sub->add_option("--semimetric", o.semimetrics, help)->check(kSemiMetric);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Functional partial linear regression with Bayesian bandwidth selection", "fplm"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "fplm 1.0");
  app.set_config("--config", "", "TOML file; keys go in a section named after the command ([fit], [bench], ...). "
                 "Command-line flags take precedence");
  app.fallthrough();

  auto* sim = app.add_subcommand("simulate", "simulate curves and responses");
  sim->add_option("--dgp", o.dgp, "smooth or rough")->check(CLI::IsMember({"smooth", "rough"}))->capture_default_str();
  sim->add_option("--n", o.n, "number of curves")->capture_default_str();
  sim->add_option("--density", o.densities, "t5, skewunimodal or skewbimodal")
      ->check(CLI::IsMember({"t5", "skewunimodal", "skewbimodal"}))
      ->expected(1)
      ->capture_default_str();
  sim->add_option("--noise-range", o.noise_range, "rough curves: U(-r, r) noise per grid point")->capture_default_str();
  sim->add_option("--seed", o.seed, "random seed")->required();
  sim->add_option("--out", o.out, "output directory")->capture_default_str();

  auto* fit = app.add_subcommand("fit", "sample the bandwidth posterior and fit one model");
  fit->add_option("--input", o.input, "dataset (curve CSV or tecator file)")->required()->check(kDataFile);
  fit->add_option("--model", o.model, "fplm or fnp")->check(CLI::IsMember({"fplm", "fnp"}))->capture_default_str();
  add_semimetric_option(fit, o, "semi-metric (default deriv:2)");
  fit->add_option("--n-train", o.n_train, "first rows used for training; the rest are scored (0: all)");
  fit->add_option("--level", o.level, "prediction interval level for held-out rows (default 0.8)");
  fit->add_option("--out", o.out, "output directory")->capture_default_str();
  add_sampler_options(fit, o, false);

  auto* pred = app.add_subcommand("predict", "predict new curves from a fit artifact");
  pred->add_option("--fit", o.fit_path, "fit.json written by 'fit'")->required()->check(CLI::ExistingFile);
  pred->add_option("--input", o.input, "curves to predict")->required()->check(kDataFile);
  pred->add_option("--level", o.level, "add prediction intervals at this level");
  pred->add_flag("--in-sample", o.in_sample, "input is the training set; leave each unit out of its own prediction");
  pred->add_option("--out", o.out, "output directory")->capture_default_str();

  auto* sel = app.add_subcommand("select-semimetric", "rank semi-metrics by marginal likelihood");
  sel->add_option("--input", o.input, "dataset")->required()->check(kDataFile);
  add_semimetric_option(sel, o, "candidate (repeat; default deriv:1 deriv:2 fpca:3)");
  sel->add_option("--n-train", o.n_train, "first rows used (0: all)");
  sel->add_option("--threads", o.threads, "parallel chains")->capture_default_str();
  sel->add_option("--out", o.out, "output directory")->capture_default_str();
  add_sampler_options(sel, o, false);

  auto* ben = app.add_subcommand("bench", "Monte Carlo replication study or tecator bootstrap");
  ben->add_option("--dgp", o.dgp, "smooth or rough")->check(CLI::IsMember({"smooth", "rough"}))->capture_default_str();
  ben->add_option("--B", o.replications, "replications")->capture_default_str();
  ben->add_option("--n", o.n, "training curves per replication")->capture_default_str();
  ben->add_option("--holdout", o.holdout, "holdout curves per replication (0: same as --n)");
  ben->add_option("--density", o.densities, "error densities (repeat)")
      ->check(CLI::IsMember({"t5", "skewunimodal", "skewbimodal"}))
      ->capture_default_str();
  ben->add_option("--model", o.models, "models (repeat; default fplm fnp fpcr)")
      ->check(CLI::IsMember({"fplm", "fnp", "fpcr"}));
  add_semimetric_option(ben, o, "semi-metrics (repeat; default deriv:2)");
  ben->add_option("--noise-range", o.noise_range, "rough curves: U(-r, r) noise per grid point")->capture_default_str();
  ben->add_option("--tecator", o.tecator, "bootstrap on this dataset instead of simulating")->check(kDataFile);
  ben->add_option("--bootstrap", o.bootstrap, "bootstrap resamples");
  ben->add_option("--n-train", o.n_train, "bootstrap training size (default 160)");
  ben->add_option("--threads", o.threads, "parallel replications")->capture_default_str();
  ben->add_option("--out", o.out, "output directory")->capture_default_str();
  add_sampler_options(ben, o, true);

  std::vector<std::string> argv_store{"fplm"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  if (o.threads < 1) {
    err << "error: --threads must be >= 1\n";
    return 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(o, out);
    if (fit->parsed()) return cmd_fit(o, out);
    if (pred->parsed()) return cmd_predict(o, out);
    if (sel->parsed()) return cmd_select(o, out);
    return cmd_bench(o, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace fplm::cli
