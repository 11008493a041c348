#pragma once

// Resampling and multiple-testing: moving-block, parametric, time-block and
// wild-cluster bootstraps, jackknife, Fisher-z intervals, Holm and
// Romano-Wolf adjustments, falsification tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "sentfeed/core_series.hpp"
#include "sentfeed/detail/hac.hpp"
#include "sentfeed/detail/parallel.hpp"
#include "sentfeed/detail/rng.hpp"
#include "sentfeed/detail/stats.hpp"
#include "sentfeed/econometrics.hpp"
#include "sentfeed/error.hpp"
#include "sentfeed/panel.hpp"
#include "sentfeed/structural.hpp"

namespace sentfeed {

enum class BootstrapScheme { MovingBlock, Parametric, TimeBlock, WildCluster };

constexpr std::string_view to_string(BootstrapScheme s) {
  switch (s) {
    case BootstrapScheme::MovingBlock: return "moving-block";
    case BootstrapScheme::Parametric: return "parametric";
    case BootstrapScheme::TimeBlock: return "time-block";
    case BootstrapScheme::WildCluster: return "wild-cluster";
  }
  return "?";
}

inline BootstrapScheme parse_scheme(std::string_view s) {
  if (s == "moving-block") return BootstrapScheme::MovingBlock;
  if (s == "parametric") return BootstrapScheme::Parametric;
  if (s == "time-block") return BootstrapScheme::TimeBlock;
  if (s == "wild-cluster") return BootstrapScheme::WildCluster;
  fail(ErrorKind::InvalidArgument, "unknown bootstrap scheme '" + std::string(s) + "'");
}

struct BootstrapSpec {
  BootstrapScheme scheme = BootstrapScheme::MovingBlock;
  int block_len = 12;
  int B = 1000;
  std::uint64_t seed = 0;
  std::string cluster_key = "month";
  double level = 0.95;
  int threads = 1;

  void validate() const {
    require(B >= 1, ErrorKind::InvalidArgument, "bootstrap needs B >= 1");
    require(block_len >= 1, ErrorKind::InvalidArgument, "block_len must be >= 1");
    require(level > 0.0 && level < 1.0, ErrorKind::InvalidArgument, "level must be in (0,1)");
  }
};

struct IntervalEstimate {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
  bool boundary_flag = false;  // upper bound censored at +inf
};

// Percentile interval (type-7 quantiles of the sorted draws).
inline IntervalEstimate percentile_interval(double point, std::vector<double> draws, double level) {
  require(!draws.empty(), ErrorKind::InvalidArgument, "no bootstrap draws");
  require(level > 0.0 && level < 1.0, ErrorKind::InvalidArgument, "level must be in (0,1)");
  std::sort(draws.begin(), draws.end());
  const double a = (1.0 - level) / 2.0;
  IntervalEstimate ci;
  ci.point = point;
  ci.level = level;
  ci.lower = stats::quantile_sorted(draws, a);
  ci.upper = stats::quantile_sorted(draws, 1.0 - a);
  ci.boundary_flag = std::isinf(ci.upper);
  return ci;
}

// ---------------------------------------------------------------------------
// Moving-block bootstrap

// Overlapping blocks with starts 0..T-len, no wrap; the concatenation is
// truncated to T.
inline std::vector<std::size_t> moving_block_indices(std::size_t T, std::size_t block_len, Rng& rng) {
  require(block_len >= 1 && block_len <= T, ErrorKind::BlockTooLong,
          "block length " + std::to_string(block_len) + " exceeds series length " + std::to_string(T));
  std::uniform_int_distribution<std::size_t> start(0, T - block_len);
  std::vector<std::size_t> idx;
  idx.reserve(T + block_len);
  while (idx.size() < T) {
    const auto s = start(rng);
    for (std::size_t j = 0; j < block_len && idx.size() < T; ++j) idx.push_back(s + j);
  }
  return idx;
}

using SeriesStatistic = std::function<double(const std::vector<std::vector<double>>&)>;

struct BootstrapDraws {
  IntervalEstimate interval;
  std::vector<double> draws;  // in replication order
};

// Resamples the rows of an aligned set of series jointly.
inline BootstrapDraws moving_block_bootstrap(const std::vector<std::vector<double>>& data, const SeriesStatistic& stat,
                                             const BootstrapSpec& spec) {
  spec.validate();
  require(!data.empty() && !data.front().empty(), ErrorKind::SeriesTooShort, "no data to resample");
  const std::size_t T = data.front().size();
  for (const auto& s : data) require(s.size() == T, ErrorKind::MisalignedIndex, "series are not aligned");
  require(static_cast<std::size_t>(spec.block_len) <= T, ErrorKind::BlockTooLong,
          "block length " + std::to_string(spec.block_len) + " exceeds series length " + std::to_string(T));
  BootstrapDraws out;
  out.draws = parallel_map(static_cast<std::size_t>(spec.B), spec.threads, [&](std::size_t b) {
    Rng rng(derive_seed(spec.seed, 1, b));
    const auto idx = moving_block_indices(T, static_cast<std::size_t>(spec.block_len), rng);
    std::vector<std::vector<double>> sample(data.size(), std::vector<double>(T));
    for (std::size_t k = 0; k < data.size(); ++k)
      for (std::size_t t = 0; t < T; ++t) sample[k][t] = data[k][idx[t]];
    return stat(sample);
  });
  out.interval = percentile_interval(stat(data), out.draws, spec.level);
  return out;
}

// ---------------------------------------------------------------------------
// Parametric IRF bootstrap

struct ParametricBootstrapResult {
  GeometricFit point;
  std::vector<double> kappa_draws;
  std::vector<double> rho_draws;
  std::vector<double> half_life_draws;
  IntervalEstimate kappa;
  IntervalEstimate rho;
  IntervalEstimate half_life;
  bool covariance_repaired = false;
};

// Symmetric square root with negative eigenvalues clipped to zero.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, bool* repaired = nullptr) {
  const Eigen::MatrixXd s = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  Eigen::VectorXd ev = es.eigenvalues();
  const double tol = -1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (repaired) *repaired = (ev.array() < tol).any();
  ev = ev.cwiseMax(0.0);
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

// Draws beta ~ N(beta_hat, Sigma_hat) and refits per draw. The rho box for
// the draws extends to one so unit-root draws are representable; the half-life
// upper bound is censored at +inf when the rho upper endpoint reaches
// 1 - 1e-9.
inline ParametricBootstrapResult parametric_irf_bootstrap(const IrfEstimate& irf, FitMethod method, IrfConvention conv,
                                                          const BootstrapSpec& spec, FitOptions opt = {}) {
  spec.validate();
  irf.validate();
  opt.rho_hi = std::max(opt.rho_hi, 1.0);
  ParametricBootstrapResult out;
  const Eigen::MatrixXd L = psd_sqrt(irf.covariance, &out.covariance_repaired);
  const auto H = static_cast<Eigen::Index>(irf.betas.size());
  const Eigen::VectorXd beta = Eigen::Map<const Eigen::VectorXd>(irf.betas.data(), H);
  out.point = fit_geometric(irf, method, conv, opt);

  struct Draw {
    double kappa, rho;
  };
  const auto draws = parallel_map(static_cast<std::size_t>(spec.B), spec.threads, [&](std::size_t b) {
    Rng rng(derive_seed(spec.seed, 2, b));
    const auto z = standard_normals(rng, static_cast<std::size_t>(H));
    IrfEstimate d = irf;
    const Eigen::VectorXd bd = beta + L * Eigen::Map<const Eigen::VectorXd>(z.data(), H);
    d.betas.assign(bd.data(), bd.data() + H);
    const auto f = fit_geometric(d, method, conv, opt);
    return Draw{f.kappa_bps, f.rho};
  });
  for (const auto& d : draws) {
    out.kappa_draws.push_back(d.kappa);
    out.rho_draws.push_back(d.rho);
    out.half_life_draws.push_back(d.rho > 0.0 ? half_life(d.rho) : 0.0);
  }
  out.kappa = percentile_interval(out.point.kappa_bps, out.kappa_draws, spec.level);
  out.rho = percentile_interval(out.point.rho, out.rho_draws, spec.level);
  out.half_life = percentile_interval(out.point.half_life, out.half_life_draws, spec.level);
  if (out.rho.upper >= 1.0 - kUnitRootTolerance) {
    out.half_life.upper = std::numeric_limits<double>::infinity();
    out.half_life.boundary_flag = true;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fisher-z

inline double fisher_z(double rho) {
  require(rho > -1.0 && rho < 1.0, ErrorKind::DrawOutOfRange, "Fisher z needs rho in (-1,1)");
  return std::atanh(rho);
}

inline double inverse_fisher_z(double z) { return std::tanh(z); }

// Percentile interval on the z scale mapped back by tanh and truncated into
// the open unit interval.
inline IntervalEstimate fisher_z_ci(std::span<const double> rho_draws, double level, std::optional<double> point = {}) {
  require(!rho_draws.empty(), ErrorKind::InvalidArgument, "no rho draws");
  std::vector<double> z;
  z.reserve(rho_draws.size());
  for (double r : rho_draws) {
    require(r > -1.0 && r < 1.0, ErrorKind::DrawOutOfRange, "rho draw " + format_double(r) + " outside (-1,1)");
    z.push_back(std::atanh(r));
  }
  const double zp = point ? fisher_z(*point) : stats::quantile(z, 0.5);
  auto ci = percentile_interval(zp, z, level);
  constexpr double lo = 1e-12;
  const double hi = std::nextafter(1.0, 0.0);
  ci.point = std::clamp(std::tanh(ci.point), lo, hi);
  ci.lower = std::clamp(std::tanh(ci.lower), lo, hi);
  ci.upper = std::clamp(std::tanh(ci.upper), lo, hi);
  return ci;
}

// ---------------------------------------------------------------------------
// Multiple testing

// p_(j) * (m - j + 1) on ascending p, capped at 1, running max, input order.
inline std::vector<double> holm_adjust(std::span<const double> raw_p) {
  for (double p : raw_p)
    require(p >= 0.0 && p <= 1.0, ErrorKind::PvalOutOfRange, "p-value " + format_double(p) + " outside [0,1]");
  const std::size_t m = raw_p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return raw_p[a] < raw_p[b]; });
  std::vector<double> adj(m);
  double running = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double v = std::min(1.0, raw_p[order[j]] * static_cast<double>(m - j));
    running = std::max(running, v);
    adj[order[j]] = running;
  }
  return adj;
}

struct PvalFamily {
  std::vector<std::string> labels;
  std::vector<double> coefs;
  std::vector<double> t_stats;
  std::vector<double> raw_p;
  std::vector<double> p_holm;
  std::vector<double> p_rw;
  std::vector<std::size_t> stepdown_order;  // hypotheses by decreasing |t|
  int n_clusters = 0;
  bool few_clusters = false;  // fewer than 8 month clusters
};

// One hypothesis: coefficient `coef` of a regression panel is zero.
struct PanelHypothesis {
  std::string label;
  RegressionPanel panel;
  std::size_t coef = 0;
};

struct RomanoWolfOptions {
  int B = 1000;
  std::uint64_t seed = 0;
  FeSettings fe;
  int threads = 1;
  int min_reliable_clusters = 8;
};

namespace detail {

struct PreparedHypothesis {
  RegressionPanel panel;
  std::size_t coef;
  std::optional<WithinEstimator> full;
  Eigen::VectorXd fitted_r;  // restricted fit in the demeaned space
  Eigen::VectorXd resid_r;
  double t_obs = 0.0;
  double coef_obs = 0.0;
};

}  // namespace detail

// Wild-cluster (Rademacher, by month) restricted bootstrap with stepdown over
// max |t*|. Months are matched across hypotheses by calendar date so one
// weight vector per draw is shared by the whole family.
inline PvalFamily romano_wolf_stepdown(const std::vector<PanelHypothesis>& family, const RomanoWolfOptions& opt) {
  require(!family.empty(), ErrorKind::InvalidArgument, "empty hypothesis family");
  require(opt.B >= 1, ErrorKind::InvalidArgument, "bootstrap needs B >= 1");
  const std::size_t K = family.size();
  std::vector<detail::PreparedHypothesis> hyp(K);
  std::map<int, int> month_key;  // calendar serial -> weight slot
  for (std::size_t k = 0; k < K; ++k) {
    auto& h = hyp[k];
    h.panel = drop_singletons(family[k].panel, opt.fe);
    h.coef = family[k].coef;
    require(h.coef < static_cast<std::size_t>(h.panel.X.cols()), ErrorKind::InvalidArgument,
            "hypothesis '" + family[k].label + "' refers to a missing coefficient");
    require(h.panel.calendar.size() == static_cast<std::size_t>(h.panel.n_months), ErrorKind::MissingColumn,
            "hypothesis '" + family[k].label + "' has no month cluster key");
    h.full.emplace(h.panel, opt.fe);
    const auto fit = h.full->fit(h.panel.y);
    h.coef_obs = fit.coef(static_cast<Eigen::Index>(h.coef));
    h.t_obs = h.coef_obs / std::sqrt(fit.cov(static_cast<Eigen::Index>(h.coef), static_cast<Eigen::Index>(h.coef)));
    Eigen::MatrixXd yw = h.panel.y;
    detail::GroupIndex fi{h.panel.firm, h.panel.n_firms}, mi{h.panel.month, h.panel.n_months};
    detail::within_transform(yw, opt.fe.firm_fe ? &fi : nullptr, opt.fe.month_fe ? &mi : nullptr, opt.fe.demean_tol,
                             opt.fe.max_demean_iter);
    const Eigen::MatrixXd& Xw = h.full->demeaned_design();
    Eigen::MatrixXd Xr(Xw.rows(), Xw.cols() - 1);
    for (Eigen::Index j = 0, c = 0; j < Xw.cols(); ++j)
      if (j != static_cast<Eigen::Index>(h.coef)) Xr.col(c++) = Xw.col(j);
    if (Xr.cols() > 0) {
      const Eigen::VectorXd br = Xr.colPivHouseholderQr().solve(yw.col(0));
      h.fitted_r = Xr * br;
    } else {
      h.fitted_r = Eigen::VectorXd::Zero(Xw.rows());
    }
    h.resid_r = yw.col(0) - h.fitted_r;
    for (const auto& m : h.panel.calendar) month_key.emplace(m.serial(), static_cast<int>(month_key.size()));
  }
  // Slots follow calendar order regardless of insertion order.
  int slot = 0;
  for (auto& [serial, s] : month_key) s = slot++;

  PvalFamily out;
  out.n_clusters = static_cast<int>(month_key.size());
  require(out.n_clusters >= 2, ErrorKind::TooFewClusters, "wild cluster bootstrap needs at least 2 month clusters");
  out.few_clusters = out.n_clusters < opt.min_reliable_clusters;

  std::vector<std::vector<int>> row_slot(K);
  for (std::size_t k = 0; k < K; ++k) {
    const auto& p = hyp[k].panel;
    row_slot[k].resize(p.rows());
    for (std::size_t i = 0; i < p.rows(); ++i)
      row_slot[k][i] = month_key.at(p.calendar[static_cast<std::size_t>(p.month[i])].serial());
  }

  const auto tstar = parallel_map(static_cast<std::size_t>(opt.B), opt.threads, [&](std::size_t b) {
    Rng rng(derive_seed(opt.seed, 3, b));
    std::vector<double> w(month_key.size());
    for (auto& v : w) v = rademacher(rng);
    std::vector<double> t(K);
    for (std::size_t k = 0; k < K; ++k) {
      const auto& h = hyp[k];
      Eigen::VectorXd ys = h.fitted_r;
      for (Eigen::Index i = 0; i < ys.size(); ++i) ys(i) += w[static_cast<std::size_t>(row_slot[k][static_cast<std::size_t>(i)])] * h.resid_r(i);
      const auto f = h.full->fit(ys);
      const auto c = static_cast<Eigen::Index>(h.coef);
      const double se = std::sqrt(f.cov(c, c));
      t[k] = se > 0.0 ? f.coef(c) / se : 0.0;
    }
    return t;
  });

  out.stepdown_order.resize(K);
  std::iota(out.stepdown_order.begin(), out.stepdown_order.end(), 0);
  std::stable_sort(out.stepdown_order.begin(), out.stepdown_order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(hyp[a].t_obs) > std::abs(hyp[b].t_obs); });
  out.p_rw.assign(K, 1.0);
  double running = 0.0;
  for (std::size_t j = 0; j < K; ++j) {
    const auto target = std::abs(hyp[out.stepdown_order[j]].t_obs);
    std::size_t count = 0;
    for (const auto& t : tstar) {
      double mx = 0.0;
      for (std::size_t r = j; r < K; ++r) mx = std::max(mx, std::abs(t[out.stepdown_order[r]]));
      if (mx >= target) ++count;
    }
    running = std::max(running, static_cast<double>(count) / static_cast<double>(opt.B));
    out.p_rw[out.stepdown_order[j]] = std::min(1.0, running);
  }
  for (std::size_t k = 0; k < K; ++k) {
    out.labels.push_back(family[k].label);
    out.coefs.push_back(hyp[k].coef_obs);
    out.t_stats.push_back(hyp[k].t_obs);
    out.raw_p.push_back(stats::two_sided_p(hyp[k].t_obs));
  }
  out.p_holm = holm_adjust(out.raw_p);
  return out;
}

// ---------------------------------------------------------------------------
// Panel resampling

using PanelEstimator = std::function<std::vector<double>(const RegressionPanel&)>;

// Coefficients of the within estimator, eps terms in bps.
inline PanelEstimator fe_coefficients(const FeSettings& fe = {}) {
  return [fe](const RegressionPanel& p) {
    const auto fit = fit_regression_panel(p, fe);
    std::vector<double> c(fit.names.size());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = fit.coef_reported(i);
    return c;
  };
}

struct JackknifeResult {
  std::vector<double> estimate;
  std::vector<double> se;
  std::vector<std::vector<double>> leave_out;  // one per fold
  std::vector<int> fold_of_firm;
};

inline std::vector<int> assign_folds(int n_firms, int n_folds, std::uint64_t seed) {
  std::vector<int> firms(static_cast<std::size_t>(n_firms));
  std::iota(firms.begin(), firms.end(), 0);
  Rng rng(derive_seed(seed, 4, 0));
  std::shuffle(firms.begin(), firms.end(), rng);
  std::vector<int> fold(static_cast<std::size_t>(n_firms));
  for (std::size_t i = 0; i < firms.size(); ++i) fold[static_cast<std::size_t>(firms[i])] = static_cast<int>(i % static_cast<std::size_t>(n_folds));
  return fold;
}

// Delete-one-fold jackknife over firm groups.
inline JackknifeResult jackknife_se(const RegressionPanel& panel, const PanelEstimator& est, int n_folds = 10,
                                    std::uint64_t seed = 0, int threads = 1) {
  require(n_folds >= 2, ErrorKind::InvalidArgument, "jackknife needs at least 2 folds");
  require(panel.n_firms >= n_folds, ErrorKind::TooFewFirms,
          std::to_string(panel.n_firms) + " firms cannot fill " + std::to_string(n_folds) + " folds");
  JackknifeResult out;
  out.estimate = est(panel);
  out.fold_of_firm = assign_folds(panel.n_firms, n_folds, seed);
  out.leave_out = parallel_map(static_cast<std::size_t>(n_folds), threads, [&](std::size_t g) {
    std::vector<bool> keep(panel.rows());
    for (std::size_t i = 0; i < panel.rows(); ++i)
      keep[i] = out.fold_of_firm[static_cast<std::size_t>(panel.firm[i])] != static_cast<int>(g);
    return est(panel.subset(keep));
  });
  const std::size_t k = out.estimate.size();
  const double G = n_folds;
  out.se.assign(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    double mean = 0.0;
    for (const auto& th : out.leave_out) mean += th[c];
    mean /= G;
    double ss = 0.0;
    for (const auto& th : out.leave_out) ss += (th[c] - mean) * (th[c] - mean);
    out.se[c] = std::sqrt((G - 1.0) / G * ss);
  }
  return out;
}

struct TimeBlockResult {
  std::vector<double> estimate;
  std::vector<double> mean;
  std::vector<double> sd;
  std::vector<std::vector<double>> draws;
};

// Months resampled in contiguous blocks; each drawn month carries all of its
// rows and becomes a distinct month group in the resample.
inline TimeBlockResult time_block_bootstrap(const RegressionPanel& panel, const PanelEstimator& est, int block_len = 6,
                                           int B = 500, std::uint64_t seed = 0, int threads = 1) {
  require(B >= 1, ErrorKind::InvalidArgument, "bootstrap needs B >= 1");
  const auto T = static_cast<std::size_t>(panel.n_months);
  require(block_len >= 1 && static_cast<std::size_t>(block_len) <= T, ErrorKind::BlockTooLong,
          "block length " + std::to_string(block_len) + " exceeds " + std::to_string(T) + " months");
  // Month indices follow calendar order, so contiguous indices are
  // contiguous months.
  std::vector<std::vector<std::size_t>> rows_of_month(T);
  for (std::size_t i = 0; i < panel.rows(); ++i) rows_of_month[static_cast<std::size_t>(panel.month[i])].push_back(i);

  TimeBlockResult out;
  out.estimate = est(panel);
  out.draws = parallel_map(static_cast<std::size_t>(B), threads, [&](std::size_t b) {
    Rng rng(derive_seed(seed, 5, b));
    const auto months = moving_block_indices(T, static_cast<std::size_t>(block_len), rng);
    std::vector<std::size_t> sel;
    std::vector<int> key;
    for (std::size_t pos = 0; pos < months.size(); ++pos)
      for (auto i : rows_of_month[months[pos]]) {
        sel.push_back(i);
        key.push_back(static_cast<int>(pos));
      }
    return est(panel.gather(sel, key));
  });
  const std::size_t k = out.estimate.size();
  out.mean.assign(k, 0.0);
  out.sd.assign(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> v;
    for (const auto& d : out.draws) v.push_back(d[c]);
    out.mean[c] = stats::mean(v);
    out.sd[c] = B > 1 ? stats::stddev(v) : 0.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Falsification

struct LeadLagRow {
  int horizon = 1;
  double coef_bps = 0.0;
  double se_bps = 0.0;
  double p_value = 1.0;
  std::size_t nobs = 0;
};

// Past cumulative return r_{t-h+1} + ... + r_t regressed on the future shock
// eps_{t+1} (with intercept), HAC lag h - 1.
inline std::vector<LeadLagRow> lead_lag_test(const ShockSeries& shocks, const MonthlySeries& returns,
                                             std::span<const int> horizons) {
  require(!horizons.empty(), ErrorKind::TooFewHorizons, "no horizons");
  std::vector<LeadLagRow> out;
  for (int h : horizons) {
    require(h >= 1, ErrorKind::HorizonTooLong, "lead-lag horizon must be >= 1");
    std::vector<double> ys, xs;
    for (std::size_t s = 0; s < shocks.size(); ++s) {
      const YearMonth t = shocks.month_at(s) - 1;
      double acc = 0.0;
      bool ok = true;
      for (int j = 0; j < h && ok; ++j) {
        const auto i = returns.index_of(t - j);
        if (!i) ok = false;
        else acc += returns[*i];
      }
      if (!ok) continue;
      ys.push_back(acc);
      xs.push_back(shocks[s]);
    }
    require(ys.size() >= 10, ErrorKind::MisalignedIndex,
            "shocks and returns overlap in " + std::to_string(ys.size()) + " months at horizon " + std::to_string(h));
    const auto n = static_cast<Eigen::Index>(ys.size());
    Eigen::MatrixXd X(n, 2);
    X.col(0).setOnes();
    X.col(1) = Eigen::Map<Eigen::VectorXd>(xs.data(), n);
    const auto reg = ols_hac(Eigen::Map<Eigen::VectorXd>(ys.data(), n), X, h - 1);
    LeadLagRow row;
    row.horizon = h;
    row.coef_bps = reg.coefficients(1) / kBpsToDecimal;
    row.se_bps = reg.se(1) / kBpsToDecimal;
    row.p_value = stats::two_sided_p(reg.coefficients(1) / reg.se(1));
    row.nobs = ys.size();
    out.push_back(row);
  }
  return out;
}

struct PermutationResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::vector<double> null_draws;
};

// OLS slope of y on x with an intercept.
inline double slope(std::span<const double> x, std::span<const double> y) {
  const double mx = stats::mean(x), my = stats::mean(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

// Shuffles x within bins (typically year-month) and recomputes the slope of y
// on x. p = share of draws with |stat*| >= |stat|.
inline PermutationResult permutation_falsification(std::span<const double> x, std::span<const double> y,
                                                   std::span<const int> bin, int B, std::uint64_t seed,
                                                   int threads = 1) {
  require(x.size() == y.size() && x.size() == bin.size(), ErrorKind::MisalignedIndex, "x, y and bins must align");
  require(!x.empty(), ErrorKind::EmptyBin, "no observations");
  require(B >= 1, ErrorKind::InvalidArgument, "permutation test needs B >= 1");
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < bin.size(); ++i) members[bin[i]].push_back(i);
  for (const auto& [key, rows] : members) require(!rows.empty(), ErrorKind::EmptyBin, "empty bin");

  PermutationResult out;
  out.statistic = slope(x, y);
  out.null_draws = parallel_map(static_cast<std::size_t>(B), threads, [&](std::size_t b) {
    Rng rng(derive_seed(seed, 6, b));
    std::vector<double> xs(x.begin(), x.end());
    for (const auto& [key, rows] : members) {
      std::vector<double> vals;
      vals.reserve(rows.size());
      for (auto i : rows) vals.push_back(x[i]);
      std::shuffle(vals.begin(), vals.end(), rng);
      for (std::size_t j = 0; j < rows.size(); ++j) xs[rows[j]] = vals[j];
    }
    return slope(xs, y);
  });
  // Relative slack so identity permutations count as ties despite rounding.
  const double target = std::abs(out.statistic) * (1.0 - 1e-12);
  const auto hits = std::count_if(out.null_draws.begin(), out.null_draws.end(),
                                  [&](double s) { return std::abs(s) >= target; });
  out.p_value = static_cast<double>(hits) / static_cast<double>(B);
  return out;
}

}  // namespace sentfeed
