#pragma once

// Ingestion, stage execution, report tables and output emission.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sentfeed/core_series.hpp"
#include "sentfeed/detail/rng.hpp"
#include "sentfeed/econometrics.hpp"
#include "sentfeed/error.hpp"
#include "sentfeed/format.hpp"
#include "sentfeed/inference.hpp"
#include "sentfeed/panel.hpp"
#include "sentfeed/pipeline/config.hpp"
#include "sentfeed/pipeline/manifest.hpp"
#include "sentfeed/portfolio.hpp"
#include "sentfeed/structural.hpp"

namespace sentfeed::pipeline {

// An error raised while a stage was executing.
class StageFailure : public std::runtime_error {
 public:
  StageFailure(std::string stage, ErrorKind kind, const std::string& what)
      : std::runtime_error("stage '" + stage + "': " + what), stage_(std::move(stage)), kind_(kind) {}
  const std::string& stage() const { return stage_; }
  ErrorKind kind() const { return kind_; }

 private:
  std::string stage_;
  ErrorKind kind_;
};

// Seed streams per stage; fixed so adding a stage never shifts another.
enum StageStream : std::uint64_t {
  kStreamSimulate = 0,
  kStreamLp = 2,
  kStreamBootstrap = 3,
  kStreamPanel = 5,
  kStreamAdjust = 6,
  kStreamFalsify = 7,
};

using FileMap = std::map<std::string, std::string>;

// ---------------------------------------------------------------------------
// Ingestion

struct Dataset {
  std::optional<MonthlySeries> sentiment;
  std::optional<MonthlySeries> returns;
  std::optional<FirmMonthPanel> panel;
  std::map<std::string, MonthlySeries> factors;
  std::vector<std::pair<std::string, std::string>> input_hashes;
  std::vector<std::string> notes;  // validation report
};

struct SimulatedInputs {
  MonthlySeries sentiment;
  MonthlySeries returns;
  ShockSeries true_shocks;
  FirmMonthPanel panel;
};

// Sentiment S_t = phi S_{t-1} + u_t from S_0 = 0; the standardized u drive
// returns through the configured impact model (feedback or piecewise) and
// the firm panel.
inline SimulatedInputs simulate_inputs(const SimulateSection& sim, std::uint64_t seed) {
  require(sim.model == "feedback" || sim.model == "piecewise", ErrorKind::SchemaViolation,
          "pipeline inputs can be simulated from the feedback or piecewise model only");
  Rng rng(derive_seed(seed, kStreamSimulate, 0));
  const auto u = standard_normals(rng, sim.T);
  std::vector<double> s(sim.T + 1, 0.0);
  for (std::size_t t = 1; t <= sim.T; ++t) s[t] = sim.sentiment_phi * s[t - 1] + u[t - 1];
  SimulatedInputs out;
  out.sentiment = MonthlySeries(sim.start, s);
  out.true_shocks = ShockSeries::standardized(sim.start + 1, u);
  std::vector<double> impact(sim.T);
  for (std::size_t t = 0; t < sim.T; ++t)
    impact[t] = sim.model == "feedback" ? sim.kappa_bps * out.true_shocks[t]
                                        : piecewise_impact(out.true_shocks[t], sim.piecewise).m;
  out.returns = returns_from_impacts(sim.rho, impact, sim.start + 1);

  PanelSimConfig pc;
  pc.n_firms = sim.panel.n_firms;
  pc.n_months = sim.panel.n_months > 0 ? sim.panel.n_months : static_cast<int>(sim.T);
  pc.start = sim.start + 1;
  pc.kappa_bps = sim.panel.kappa_bps;
  pc.low_breadth_multiplier = sim.panel.low_breadth_multiplier;
  pc.idio_sd = sim.panel.idio_sd;
  pc.month_sd = sim.panel.month_sd;
  out.panel = simulate_firm_panel(pc, out.true_shocks, derive_seed(seed, kStreamSimulate, 1));
  Rng srng(derive_seed(seed, kStreamSimulate, 2));
  std::normal_distribution<double> z(0.0, 1.0);
  auto& signal = out.panel.extra["signal"];
  for (double b : out.panel.breadth) signal.push_back(1.0 - b + 0.05 * z(srng));
  return out;
}

inline Dataset ingest(const RunConfig& cfg) {
  Dataset d;
  auto load = [&](const std::string& path) {
    const auto bytes = read_bytes(cfg.inputs.resolve(path));
    d.input_hashes.emplace_back(path, sha256_hex(bytes));
    return bytes;
  };
  if (!cfg.inputs.sentiment.empty()) {
    std::istringstream in(load(cfg.inputs.sentiment));
    d.sentiment = parse_monthly_csv(in, cfg.inputs.sentiment);
    d.notes.push_back("sentiment: " + std::to_string(d.sentiment->size()) + " months");
  }
  if (!cfg.inputs.market.empty()) {
    std::istringstream in(load(cfg.inputs.market));
    d.returns = parse_monthly_csv(in, cfg.inputs.market);
    d.notes.push_back("market: " + std::to_string(d.returns->size()) + " months");
  }
  if (!cfg.inputs.panel.empty()) {
    std::istringstream in(load(cfg.inputs.panel));
    PanelReadOptions opt;
    opt.forward_carry_breadth = cfg.inputs.forward_carry_breadth;
    d.panel = parse_panel_csv(in, cfg.inputs.panel, opt);
    d.notes.push_back("panel: " + std::to_string(d.panel->size()) + " firm-months");
  }
  for (const auto& [name, path] : cfg.inputs.factors) {
    std::istringstream in(load(path));
    d.factors.emplace(name, parse_monthly_csv(in, path));
  }
  if (cfg.simulate && (!d.sentiment || !d.returns || !d.panel)) {
    require(cfg.seed.has_value(), ErrorKind::SchemaViolation, "config: simulated inputs need a seed");
    auto sim = simulate_inputs(*cfg.simulate, *cfg.seed);
    const std::string label = "simulated:" + sha256_hex(json(cfg.source.at("simulate")).dump());
    d.input_hashes.emplace_back(label, sha256_hex(std::to_string(*cfg.seed)));
    if (!d.sentiment) d.sentiment = std::move(sim.sentiment);
    if (!d.returns) d.returns = std::move(sim.returns);
    if (!d.panel) d.panel = std::move(sim.panel);
    d.notes.push_back("simulated inputs (" + cfg.simulate->model + ", T=" + std::to_string(cfg.simulate->T) + ")");
  }
  return d;
}

// ---------------------------------------------------------------------------
// Stage results

struct Results {
  std::optional<Ar1Fit> ar1;
  std::optional<ShockSeries> shocks;
  std::optional<IrfEstimate> irf;
  std::optional<GeometricFit> fit;
  std::vector<RollingPoint> rolling;
  std::optional<ParametricBootstrapResult> boot;
  std::optional<FirmMonthPanel> tagged;
  std::vector<int> panel_horizons;
  std::vector<RegressionPanel> regression_panels;  // per panel horizon
  std::vector<PanelFit> panel_fits;
  std::optional<PortfolioSeries> portfolios;
  std::optional<CostResult> costs;
  std::optional<PerformanceSummary> performance;
  std::optional<PvalFamily> family;
  std::vector<int> family_horizons;
  std::vector<LeadLagRow> lead_lag;
  std::optional<PermutationResult> permutation;
};

namespace detail {

inline std::string csv_num(double v, int precision = 10) { return format_double(v, precision); }

inline FeSettings fe_of(const PanelSection& p) {
  FeSettings fe;
  fe.firm_fe = p.firm_fe;
  fe.month_fe = p.month_fe;
  fe.cluster_firm = p.cluster_firm;
  fe.cluster_month = p.cluster_month;
  return fe;
}

inline PanelSpec panel_spec_of(const PanelSection& p, int horizon, const std::vector<std::string>& terms) {
  PanelSpec spec;
  spec.horizon = horizon;
  for (const auto& t : terms) spec.terms.push_back(parse_term(t));
  spec.fe = fe_of(p);
  return spec;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stages

inline void stage_shocks(const RunConfig& cfg, const Dataset& d, Results& r, FileMap& files) {
  Ar1Options opt;
  opt.demean = cfg.shocks.demean;
  opt.hac_lag = cfg.shocks.hac_lag;
  r.ar1 = estimate_ar1(*d.sentiment, opt);
  r.shocks = standardize_shocks(*r.ar1, cfg.shocks.flip);
  std::ostringstream out;
  write_monthly_csv(out, r.shocks->start(), r.shocks->eps());
  files["shocks.csv"] = out.str();
}

inline void stage_lp(const RunConfig& cfg, const Dataset& d, Results& r, FileMap& files, unsigned) {
  LpOptions opt;
  opt.mode = cfg.lp.mode;
  opt.covariance = cfg.lp.covariance;
  opt.block_len = cfg.lp.block_len;
  opt.block_reps = cfg.lp.block_reps;
  opt.seed = derive_seed(cfg.seed.value_or(0), kStreamLp, 0);
  r.irf = local_projection_irf(*r.shocks, *d.returns, cfg.lp.horizons, opt);
  std::ostringstream out;
  out << "horizon,beta_bps,se_bps,nobs\n";
  for (std::size_t i = 0; i < r.irf->horizons.size(); ++i)
    out << r.irf->horizons[i] << ',' << detail::csv_num(r.irf->betas[i] / kBpsToDecimal) << ','
        << detail::csv_num(r.irf->ses[i] / kBpsToDecimal) << ',' << r.irf->nobs[i] << '\n';
  files["irf.csv"] = out.str();
  // Cross-horizon covariance sidecar, bps^2.
  std::ostringstream cov;
  cov << "horizon";
  for (int h : r.irf->horizons) cov << ",h" << h;
  cov << '\n';
  for (Eigen::Index i = 0; i < r.irf->covariance.rows(); ++i) {
    cov << r.irf->horizons[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < r.irf->covariance.cols(); ++j)
      cov << ',' << detail::csv_num(r.irf->covariance(i, j) / (kBpsToDecimal * kBpsToDecimal));
    cov << '\n';
  }
  files["irf_covariance.csv"] = cov.str();
}

inline void stage_fit(const RunConfig& cfg, const Dataset& d, Results& r, FileMap& files, unsigned threads) {
  r.fit = fit_geometric(*r.irf, cfg.fit.method, cfg.fit.convention, cfg.fit.options);
  const auto& f = *r.fit;
  std::ostringstream out;
  out << "method,convention,kappa_bps,rho,half_life_months,objective,dof,j_pvalue,r2,se_kappa_bps,se_rho,flags\n";
  const double sk = f.param_cov ? std::sqrt(std::max(0.0, (*f.param_cov)(0, 0))) : std::nan("");
  const double sr = f.param_cov ? std::sqrt(std::max(0.0, (*f.param_cov)(1, 1))) : std::nan("");
  out << to_string(f.method) << ',' << to_string(f.convention) << ',' << detail::csv_num(f.kappa_bps) << ','
      << detail::csv_num(f.rho) << ',' << detail::csv_num(f.half_life) << ',' << detail::csv_num(f.objective) << ','
      << f.dof << ',' << detail::csv_num(f.j_pvalue) << ',' << detail::csv_num(f.r_squared) << ','
      << detail::csv_num(sk) << ',' << detail::csv_num(sr) << ',' << f.flags() << '\n';
  files["fit.csv"] = out.str();
  if (cfg.fit.rolling) {
    RollingOptions ro;
    ro.window = cfg.fit.rolling_window;
    ro.step = cfg.fit.rolling_step;
    ro.method = cfg.fit.method;
    ro.convention = cfg.fit.convention;
    ro.mode = cfg.lp.mode;
    ro.threads = threads;
    ro.fit = cfg.fit.options;
    r.rolling = rolling_fit(*r.shocks, *d.returns, cfg.lp.horizons, ro);
    std::ostringstream rs;
    rs << "window_start,kappa_bps,rho,half_life_months,flags\n";
    for (const auto& p : r.rolling)
      rs << p.window_start.str() << ',' << detail::csv_num(p.fit.kappa_bps) << ',' << detail::csv_num(p.fit.rho) << ','
         << detail::csv_num(p.fit.half_life) << ',' << p.fit.flags() << '\n';
    files["rolling.csv"] = rs.str();
  }
}

inline void stage_bootstrap(const RunConfig& cfg, const Dataset&, Results& r, FileMap& files, unsigned threads) {
  BootstrapSpec spec;
  spec.scheme = BootstrapScheme::Parametric;
  spec.B = cfg.bootstrap.B;
  spec.level = cfg.bootstrap.level;
  spec.seed = derive_seed(*cfg.seed, kStreamBootstrap, 0);
  spec.threads = static_cast<int>(threads);
  r.boot = parametric_irf_bootstrap(*r.irf, cfg.fit.method, cfg.fit.convention, spec, cfg.fit.options);
  const auto& b = *r.boot;
  std::ostringstream draws;
  draws << "draw,kappa_bps,rho,half_life\n";
  for (std::size_t i = 0; i < b.kappa_draws.size(); ++i)
    draws << i + 1 << ',' << detail::csv_num(b.kappa_draws[i]) << ',' << detail::csv_num(b.rho_draws[i]) << ','
          << detail::csv_num(b.half_life_draws[i]) << '\n';
  files["bootstrap_draws.csv"] = draws.str();

  std::ostringstream ci;
  ci << "parameter,point,lower,upper,level,censored\n";
  auto row = [&](const std::string& name, const IntervalEstimate& e) {
    ci << name << ',' << detail::csv_num(e.point) << ',' << detail::csv_num(e.lower) << ',' << detail::csv_num(e.upper)
       << ',' << detail::csv_num(e.level) << ',' << (e.boundary_flag ? 1 : 0) << '\n';
  };
  row("kappa_bps", b.kappa);
  row("rho", b.rho);
  row("half_life", b.half_life);
  const bool interior = std::all_of(b.rho_draws.begin(), b.rho_draws.end(), [](double v) { return v > -1.0 && v < 1.0; });
  if (interior && b.point.rho < 1.0) row("rho_fisher_z", fisher_z_ci(b.rho_draws, spec.level, b.point.rho));
  files["bootstrap_intervals.csv"] = ci.str();
}

inline void stage_panel(const RunConfig& cfg, const Dataset& d, Results& r, FileMap& files, unsigned threads) {
  RegimeOptions ro;
  ro.post_dates = cfg.panel.post_dates;
  r.tagged = tag_regimes(*d.panel, ro);
  r.panel_horizons = cfg.panel.horizons;
  const auto fe = detail::fe_of(cfg.panel);
  std::ostringstream out;
  out << "horizon,term,status,coef_bps,se_bps,se_paren,t_stat,p_value,nobs,adj_r2,n_firm_fe,n_month_fe,singletons_dropped,cov_repaired\n";
  for (int h : cfg.panel.horizons) {
    const auto spec = detail::panel_spec_of(cfg.panel, h, cfg.panel.terms);
    auto rp = build_regression_panel(*r.tagged, *r.shocks, spec);
    auto fit = fit_regression_panel(rp, fe);
    fit.horizon = h;
    for (std::size_t i = 0; i < fit.names.size(); ++i)
      out << h << ',' << fit.names[i] << ",estimated," << detail::csv_num(fit.coef_reported(i)) << ','
          << detail::csv_num(fit.se_reported(i)) << ",(" << format_fixed(fit.se_reported(i), 2) << ")," << detail::csv_num(fit.t_stat(i))
          << ',' << detail::csv_num(fit.p_value(i)) << ',' << fit.nobs << ',' << detail::csv_num(fit.adj_r2) << ','
          << fit.n_firm_fe << ',' << fit.n_month_fe << ',' << fit.singletons_dropped << ',' << (fit.cov_repaired ? 1 : 0)
          << '\n';
    for (const auto& a : fit.absorbed_terms) out << h << ',' << a << ",absorbed,nan,nan,,nan,nan," << fit.nobs << ",nan,,,,\n";
    r.regression_panels.push_back(std::move(rp));
    r.panel_fits.push_back(std::move(fit));
  }
  files["panel_coefficients.csv"] = out.str();

  // Robustness at the first horizon.
  const auto& rp = r.regression_panels.front();
  const auto& base = r.panel_fits.front();
  const auto est = fe_coefficients(fe);
  std::ostringstream rob;
  rob << "horizon,term,coef_bps,se_cluster_bps,se_jackknife_bps,time_block_mean_bps,time_block_sd_bps\n";
  std::vector<double> jk_se(base.names.size(), std::nan(""));
  if (rp.n_firms >= cfg.panel.jackknife_folds)
    jk_se = jackknife_se(rp, est, cfg.panel.jackknife_folds, derive_seed(*cfg.seed, kStreamPanel, 0), static_cast<int>(threads)).se;
  const auto tb = time_block_bootstrap(rp, est, cfg.panel.time_block_len, cfg.panel.time_block_B,
                                       derive_seed(*cfg.seed, kStreamPanel, 1), static_cast<int>(threads));
  for (std::size_t i = 0; i < base.names.size(); ++i)
    rob << base.horizon << ',' << base.names[i] << ',' << detail::csv_num(base.coef_reported(i)) << ','
        << detail::csv_num(base.se_reported(i)) << ',' << detail::csv_num(jk_se[i]) << ',' << detail::csv_num(tb.mean[i])
        << ',' << detail::csv_num(tb.sd[i]) << '\n';
  files["panel_robustness.csv"] = rob.str();
}

inline void stage_sorts(const RunConfig& cfg, const Dataset& d, Results& r, FileMap& files, unsigned) {
  const auto mem = form_portfolios(*d.panel, cfg.sorts.sort);
  r.portfolios = portfolio_returns(mem, *d.panel, cfg.sorts.sort.weighting, cfg.sorts.sort.delisting_column);
  r.costs = turnover_and_costs(*r.portfolios, cfg.sorts.sort.cost_bps_oneway);
  require(!r.costs->gross.empty(), ErrorKind::InvalidArgument, "no month has both end buckets populated");
  r.performance = summarize(*r.costs, cfg.sorts.sharpe_lag);
  std::ostringstream b, ls, perf;
  write_bucket_csv(b, *r.portfolios);
  write_long_short_csv(ls, *r.costs);
  write_performance_csv(perf, *r.performance);
  files["portfolio_buckets.csv"] = b.str();
  files["portfolio_ls.csv"] = ls.str();
  files["portfolio_summary.csv"] = perf.str();
}

inline void stage_adjustments(const RunConfig& cfg, const Dataset&, Results& r, FileMap& files, unsigned threads) {
  std::vector<PanelHypothesis> family;
  for (const auto& term : cfg.adjustments.terms) {
    const auto canonical = parse_term(term).name();
    for (std::size_t k = 0; k < r.panel_fits.size(); ++k) {
      const auto idx = r.panel_fits[k].index_of(canonical);
      require(idx.has_value(), ErrorKind::MissingColumn,
              "term '" + canonical + "' is not an estimated panel coefficient at horizon " + std::to_string(r.panel_horizons[k]));
      family.push_back({canonical, r.regression_panels[k], *idx});
      r.family_horizons.push_back(r.panel_horizons[k]);
    }
  }
  RomanoWolfOptions opt;
  opt.B = cfg.adjustments.B;
  opt.seed = derive_seed(*cfg.seed, kStreamAdjust, 0);
  opt.fe = detail::fe_of(cfg.panel);
  opt.threads = static_cast<int>(threads);
  r.family = romano_wolf_stepdown(family, opt);
  const auto& f = *r.family;
  std::ostringstream out;
  out << "family,label,horizon,coef_bps,raw_p,p_holm,p_rw\n";
  for (std::size_t k = 0; k < f.labels.size(); ++k) {
    const double scale = family[k].panel.eps_term[family[k].coef] ? 1e4 : 1.0;
    out << f.labels[k] << ',' << f.labels[k] << "@h" << r.family_horizons[k] << ',' << r.family_horizons[k] << ','
        << detail::csv_num(f.coefs[k] * scale) << ',' << detail::csv_num(f.raw_p[k]) << ',' << detail::csv_num(f.p_holm[k])
        << ',' << detail::csv_num(f.p_rw[k]) << '\n';
  }
  files["adjusted_pvalues.csv"] = out.str();
}

inline void stage_falsifications(const RunConfig& cfg, const Dataset& d, Results& r, FileMap& files,
                                 unsigned threads) {
  r.lead_lag = lead_lag_test(*r.shocks, *d.returns, cfg.falsifications.lead_lag_horizons);
  std::ostringstream ll;
  ll << "horizon,coef_bps,se_bps,p_value,nobs\n";
  for (const auto& row : r.lead_lag)
    ll << row.horizon << ',' << detail::csv_num(row.coef_bps) << ',' << detail::csv_num(row.se_bps) << ','
       << detail::csv_num(row.p_value) << ',' << row.nobs << '\n';
  files["lead_lag.csv"] = ll.str();

  if (!d.panel) return;
  // Pooled slope of next-month firm returns on the term, with the term
  // shuffled across firms inside each month.
  const auto tagged = r.tagged ? *r.tagged : tag_regimes(*d.panel);
  PanelSection ps = cfg.panel;
  ps.firm_fe = ps.month_fe = false;
  const auto spec = detail::panel_spec_of(ps, 1, {cfg.falsifications.permutation_term});
  const auto rp = build_regression_panel(tagged, *r.shocks, spec);
  std::vector<double> x(rp.rows()), y(rp.rows());
  for (std::size_t i = 0; i < rp.rows(); ++i) {
    x[i] = rp.X(static_cast<Eigen::Index>(i), 0);
    y[i] = rp.y(static_cast<Eigen::Index>(i));
  }
  r.permutation = permutation_falsification(x, y, rp.month, cfg.falsifications.permutation_B,
                                            derive_seed(*cfg.seed, kStreamFalsify, 0), static_cast<int>(threads));
  const double scale = rp.eps_term.front() ? 1e4 : 1.0;
  std::ostringstream pm;
  pm << "term,statistic,p_value,B\n";
  pm << rp.names.front() << ',' << detail::csv_num(r.permutation->statistic * scale) << ','
     << detail::csv_num(r.permutation->p_value) << ',' << cfg.falsifications.permutation_B << '\n';
  files["permutation.csv"] = pm.str();
}

// ---------------------------------------------------------------------------
// Report tables

inline void emit_report(const Results& r, FileMap& files) {
  require(r.fit || r.irf || r.costs || !r.panel_fits.empty() || r.family, ErrorKind::MissingUpstream,
          "report needs at least one upstream stage result");
  if (r.fit) {
    const auto& f = *r.fit;
    const auto peak = model_peak(f);
    std::ostringstream out;
    out << "label,kappa_bps,rho,half_life,peak_beta_bps,peak_h,fit_r2,kappa_ci_lo,kappa_ci_hi,rho_ci_lo,rho_ci_hi,"
           "half_life_ci_lo,half_life_ci_hi,peak_beta_ci_lo,peak_beta_ci_hi,peak_h_ci_lo,peak_h_ci_hi,j_stat,dof,"
           "j_pvalue,method,convention,flags\n";
    out << "geometric_irf," << detail::csv_num(f.kappa_bps, 6) << ',' << detail::csv_num(f.rho, 6) << ','
        << detail::csv_num(f.half_life, 6) << ',' << detail::csv_num(peak.beta_bps, 6) << ',' << peak.horizon << ','
        << detail::csv_num(f.r_squared, 6) << ',';
    if (r.boot) {
      const auto& b = *r.boot;
      std::vector<double> pb, ph;
      for (std::size_t i = 0; i < b.kappa_draws.size(); ++i) {
        GeometricFit g = f;
        g.kappa_bps = b.kappa_draws[i];
        g.rho = b.rho_draws[i];
        const auto p = model_peak(g);
        pb.push_back(p.beta_bps);
        ph.push_back(p.horizon);
      }
      const auto cpb = percentile_interval(peak.beta_bps, pb, b.kappa.level);
      const auto cph = percentile_interval(peak.horizon, ph, b.kappa.level);
      for (double v : {b.kappa.lower, b.kappa.upper, b.rho.lower, b.rho.upper, b.half_life.lower, b.half_life.upper,
                       cpb.lower, cpb.upper, cph.lower, cph.upper})
        out << detail::csv_num(v, 6) << ',';
    } else {
      for (int i = 0; i < 10; ++i) out << "nan,";
    }
    out << (f.method == FitMethod::Gmm ? detail::csv_num(f.objective, 6) : "nan") << ',' << f.dof << ','
        << detail::csv_num(f.j_pvalue, 6) << ',' << to_string(f.method) << ',' << to_string(f.convention) << ','
        << f.flags() << '\n';
    files["report_calibration.csv"] = out.str();
  }
  if (r.irf) {
    const auto& irf = *r.irf;
    const double z = stats::normal_quantile(0.975);
    std::ostringstream out;
    out << "horizon,beta_bps,ci_lo_bps,ci_hi_bps,model_bps\n";
    for (std::size_t i = 0; i < irf.horizons.size(); ++i) {
      const double b = irf.betas[i] / kBpsToDecimal, s = irf.ses[i] / kBpsToDecimal;
      const double model = r.fit ? r.fit->kappa_bps * irf_basis(r.fit->rho, irf.horizons[i], r.fit->convention) : std::nan("");
      out << irf.horizons[i] << ',' << detail::csv_num(b) << ',' << detail::csv_num(b - z * s) << ','
          << detail::csv_num(b + z * s) << ',' << detail::csv_num(model) << '\n';
    }
    files["report_irf_figure.csv"] = out.str();
  }
  if (r.costs && r.performance) {
    std::ostringstream out;
    out << "cost_bps,mean_net,sharpe_net,sharpe_se,turnover_long,turnover_short\n";
    for (std::size_t c = 0; c < r.costs->cost_bps.size(); ++c)
      out << detail::csv_num(r.costs->cost_bps[c]) << ',' << detail::csv_num(stats::mean(r.costs->net[c])) << ','
          << detail::csv_num(r.performance->net_sharpe[c].sharpe) << ',' << detail::csv_num(r.performance->net_sharpe[c].se)
          << ',' << detail::csv_num(r.performance->avg_turnover_long) << ','
          << detail::csv_num(r.performance->avg_turnover_short) << '\n';
    files["report_cost_sensitivity.csv"] = out.str();
  }
  if (!r.panel_fits.empty()) {
    // Horizon rows, one coefficient and one SE column per term.
    std::vector<std::string> terms;
    for (const auto& f : r.panel_fits)
      for (const auto& n : f.names)
        if (std::find(terms.begin(), terms.end(), n) == terms.end()) terms.push_back(n);
    std::ostringstream out;
    out << "horizon";
    for (const auto& t : terms) out << ',' << t << ",se";
    out << ",nobs\n";
    for (const auto& f : r.panel_fits) {
      out << f.horizon;
      for (const auto& t : terms) {
        if (auto i = f.index_of(t)) out << ',' << format_fixed(f.coef_reported(*i), 2) << ",(" << format_fixed(f.se_reported(*i), 2) << ')';
        else out << ",,";
      }
      out << ',' << f.nobs << '\n';
    }
    files["report_panel_table.csv"] = out.str();
  }
}

// ---------------------------------------------------------------------------
// Orchestration

struct PipelineOutput {
  FileMap files;
  RunManifest manifest;
  Results results;
  std::vector<std::string> notes;
};

// Stages to run for a requested target: the target and its prerequisites.
inline std::vector<std::string> stages_through(const std::string& target) {
  std::set<std::string> need{target};
  bool grew = true;
  while (grew) {
    grew = false;
    for (const auto& s : std::set<std::string>(need))
      for (const auto& p : stage_prerequisites().at(s)) grew |= need.insert(p).second;
  }
  std::vector<std::string> out;
  for (const auto& s : stage_order())
    if (need.contains(s)) out.push_back(s);
  return out;
}

// Hash of the effective configuration; the output directory is excluded so
// identical runs into different directories compare equal.
inline std::string config_hash(const RunConfig& cfg) {
  json doc = cfg.source;
  doc.erase("output_dir");
  if (cfg.seed) doc["seed"] = *cfg.seed;
  doc["stages"] = cfg.stages;
  return sha256_hex(doc.dump());
}

inline void validate_plan(const RunConfig& cfg, const Dataset& d) {
  std::set<std::string> requested(cfg.stages.begin(), cfg.stages.end());
  for (const auto& s : cfg.stages)
    for (const auto& p : stage_prerequisites().at(s))
      require(requested.contains(p), ErrorKind::StageDependencyMissing,
              "stage '" + s + "' needs stage '" + p + "' in the stage list");
  auto need = [&](bool ok, const std::string& stage, const std::string& what) {
    require(!requested.contains(stage) || ok, ErrorKind::SchemaViolation,
            "stage '" + stage + "' needs " + what + " (inputs or simulate section)");
  };
  need(d.sentiment.has_value(), "shocks", "a sentiment series");
  need(d.returns.has_value(), "lp", "a market return series");
  need(d.returns.has_value(), "falsifications", "a market return series");
  need(d.panel.has_value(), "panel", "a firm-month panel");
  need(d.panel.has_value(), "sorts", "a firm-month panel");
}

inline PipelineOutput run_pipeline(const RunConfig& cfg, const Dataset& d, unsigned threads = 1) {
  validate_plan(cfg, d);
  PipelineOutput out;
  out.notes = d.notes;
  out.manifest.config_hash = config_hash(cfg);
  out.manifest.seeded = cfg.seed.has_value();
  out.manifest.seed = cfg.seed.value_or(0);
  out.manifest.inputs = d.input_hashes;
  std::set<std::string> requested(cfg.stages.begin(), cfg.stages.end());
  auto& r = out.results;
  for (const auto& stage : stage_order()) {
    if (!requested.contains(stage)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if (stage == "shocks") stage_shocks(cfg, d, r, out.files);
      else if (stage == "lp") stage_lp(cfg, d, r, out.files, threads);
      else if (stage == "fit") stage_fit(cfg, d, r, out.files, threads);
      else if (stage == "bootstrap") stage_bootstrap(cfg, d, r, out.files, threads);
      else if (stage == "panel") stage_panel(cfg, d, r, out.files, threads);
      else if (stage == "sorts") stage_sorts(cfg, d, r, out.files, threads);
      else if (stage == "adjustments") stage_adjustments(cfg, d, r, out.files, threads);
      else if (stage == "falsifications") stage_falsifications(cfg, d, r, out.files, threads);
      else if (stage == "report") emit_report(r, out.files);
    } catch (const Error& e) {
      throw StageFailure(stage, e.kind(), e.what());
    } catch (const std::exception& e) {
      throw StageFailure(stage, ErrorKind::InvalidArgument, e.what());
    }
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    out.manifest.stage_seconds.emplace_back(stage, dt.count());
  }
  for (const auto& [name, content] : out.files) out.manifest.outputs[name] = sha256_hex(content);
  return out;
}

inline void write_outputs(const std::string& dir, const FileMap& files, const RunManifest& manifest) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, content] : files) {
    std::ofstream f(std::filesystem::path(dir) / name, std::ios::binary);
    require(static_cast<bool>(f), ErrorKind::InvalidArgument, "cannot write '" + name + "' in " + dir);
    f << content;
  }
  std::ofstream m(std::filesystem::path(dir) / "_RUNINFO.json", std::ios::binary);
  require(static_cast<bool>(m), ErrorKind::InvalidArgument, "cannot write manifest in " + dir);
  m << manifest.dump();
}

// ---------------------------------------------------------------------------
// Scenario simulation (the `simulate` command)

inline FileMap simulate_scenario(const SimulateSection& sim, std::uint64_t seed) {
  FileMap files;
  const std::uint64_t s = derive_seed(seed, kStreamSimulate, 10);
  auto put_path = [&](const MonthlySeries& returns, const ShockSeries& shocks) {
    std::ostringstream a, b;
    write_monthly_csv(a, returns);
    write_monthly_csv(b, shocks.start(), shocks.eps());
    files["returns.csv"] = a.str();
    files["shocks.csv"] = b.str();
  };
  SimulationOptions opt;
  opt.start = sim.start;
  if (sim.model == "feedback") {
    const auto p = simulate_feedback_path({sim.kappa_bps, sim.rho}, sim.T, s, opt);
    put_path(p.returns, p.shocks);
  } else if (sim.model == "piecewise") {
    const auto p = simulate_piecewise(sim.piecewise, sim.rho, sim.T, s, sim.start);
    put_path(p.returns, p.shocks);
    const auto sl = piecewise_slopes(sim.piecewise);
    std::ostringstream out;
    out << "threshold,kappa_minus,kappa_plus,constrained_months\n";
    out << (sim.piecewise.psi > 0.0 ? detail::csv_num(binding_threshold(sim.piecewise)) : "inf") << ','
        << detail::csv_num(sl.kappa_minus) << ',' << detail::csv_num(sl.kappa_plus) << ',' << p.constrained_months << '\n';
    files["piecewise_summary.csv"] = out.str();
  } else if (sim.model == "state") {
    std::vector<double> v(sim.T);
    for (std::size_t t = 0; t < sim.T; ++t) v[t] = (t / sim.V_block) % 2 == 0 ? sim.V_low : sim.V_high;
    const auto spec = calibrate_affine(sim.kappa_low, sim.kappa_high, sim.rho_low, sim.rho_high, sim.V_low, sim.V_high);
    const auto p = simulate_state_dependent(MonthlySeries(sim.start, v), spec, s);
    put_path(p.returns, p.shocks);
    std::ostringstream out;
    out << "month,V,kappa_bps,rho\n";
    for (std::size_t t = 0; t < p.kappa_bps.size(); ++t)
      out << (sim.start + static_cast<int>(t)).str() << ',' << detail::csv_num(v[t]) << ','
          << detail::csv_num(p.kappa_bps[t]) << ',' << detail::csv_num(p.rho[t]) << '\n';
    files["state_path.csv"] = out.str();
  } else {
    std::ostringstream out;
    out << "theta,regime,x_R,x_I,implied_f,price_deviation,clearing_residual\n";
    for (double th : sim.mfg_theta) {
      const auto e = mfg_clearing(sim.mfg, th);
      out << detail::csv_num(th) << ',' << to_string(e.regime) << ',' << detail::csv_num(e.x_R) << ','
          << detail::csv_num(e.x_I) << ',' << detail::csv_num(e.implied_f) << ',' << detail::csv_num(e.price_deviation)
          << ',' << detail::csv_num(e.clearing_residual) << '\n';
    }
    files["mfg_equilibria.csv"] = out.str();
  }
  return files;
}

}  // namespace sentfeed::pipeline
