#pragma once

// Regression core: OLS with Newey-West covariance, local-projection impulse
// responses, geometric IRF fitting and rolling-window refits.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sentfeed/core_series.hpp"
#include "sentfeed/detail/hac.hpp"
#include "sentfeed/detail/parallel.hpp"
#include "sentfeed/detail/rng.hpp"
#include "sentfeed/detail/stats.hpp"
#include "sentfeed/error.hpp"
#include "sentfeed/fit_types.hpp"
#include "sentfeed/structural.hpp"

namespace sentfeed {

struct RegressionResult {
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd covariance;
  Eigen::VectorXd residuals;
  std::size_t nobs = 0;
  double r_squared = 0.0;
  int lag_used = 0;

  double se(Eigen::Index i) const { return std::sqrt(std::max(0.0, covariance(i, i))); }
};

// OLS with Bartlett-kernel HAC covariance (bread * S * bread, no small-sample
// scaling). lag = 0 gives the White (HC0) covariance.
inline RegressionResult ols_hac(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, int lag) {
  require(lag >= 0, ErrorKind::LagNegative, "HAC lag must be >= 0");
  require(X.rows() == y.size() && X.rows() > X.cols(), ErrorKind::RankDeficient,
          "need more observations than regressors");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  require(qr.rank() == X.cols(), ErrorKind::RankDeficient, "design matrix is not of full column rank");

  RegressionResult out;
  out.coefficients = qr.solve(y);
  out.residuals = y - X * out.coefficients;
  const Eigen::MatrixXd bread = (X.transpose() * X).inverse();
  const Eigen::MatrixXd scores = X.array().colwise() * out.residuals.array();
  out.covariance = bread * detail::bartlett_long_run(scores, lag) * bread;
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  out.nobs = static_cast<std::size_t>(y.size());
  const double sst = (y.array() - y.mean()).square().sum();
  out.r_squared = sst > 0.0 ? 1.0 - out.residuals.squaredNorm() / sst : 0.0;
  out.lag_used = lag;
  return out;
}

// ---------------------------------------------------------------------------
// Local projections

enum class LpMode { Level, Cumulative };

constexpr std::string_view to_string(LpMode m) { return m == LpMode::Level ? "level" : "cumulative"; }

inline LpMode parse_lp_mode(std::string_view s) {
  if (s == "level") return LpMode::Level;
  if (s == "cumulative") return LpMode::Cumulative;
  fail(ErrorKind::InvalidArgument, "unknown LP mode '" + std::string(s) + "'");
}

enum class LpCovariance { BlockDiagonal, MovingBlock };

struct LpOptions {
  LpMode mode = LpMode::Level;
  // Extra regressors, one row per shock month (constant is always added).
  std::optional<Eigen::MatrixXd> controls;
  // Restrict the regression sample to shock months with mask[t] == true.
  std::optional<std::vector<bool>> sample_mask;
  std::size_t min_obs = 30;
  LpCovariance covariance = LpCovariance::BlockDiagonal;
  // Moving-block settings for the joint cross-horizon covariance.
  int block_len = 12;
  int block_reps = 500;
  std::uint64_t seed = 0;
  std::string shock_id = "eps";
};

struct IrfEstimate {
  std::vector<int> horizons;
  std::vector<double> betas;  // decimal per 1 s.d. shock
  std::vector<double> ses;
  Eigen::MatrixXd covariance;
  std::vector<std::size_t> nobs;
  LpMode mode = LpMode::Level;
  std::string shock_id = "eps";

  void validate() const {
    require(horizons.size() == betas.size() && betas.size() == ses.size(), ErrorKind::InvalidArgument,
            "IRF vectors must have equal length");
    require(covariance.rows() == static_cast<Eigen::Index>(betas.size()) && covariance.cols() == covariance.rows(),
            ErrorKind::InvalidArgument, "IRF covariance is not conformable");
    for (std::size_t i = 1; i < horizons.size(); ++i)
      require(horizons[i] > horizons[i - 1], ErrorKind::InvalidArgument, "horizons must be strictly increasing");
    for (double s : ses) require(s >= 0.0, ErrorKind::InvalidArgument, "standard errors must be >= 0");
  }
};

namespace detail {

// Outcome for shock index t at horizon h, or nullopt when returns do not
// cover t+1..t+h.
inline std::optional<double> lp_outcome(const MonthlySeries& returns, YearMonth shock_month, int h, LpMode mode) {
  const auto first = returns.index_of(shock_month + 1);
  const auto last = returns.index_of(shock_month + h);
  if (!first || !last) return std::nullopt;
  if (mode == LpMode::Level) return returns[*last];
  double acc = returns[*first];
  for (std::size_t j = *first + 1; j <= *last; ++j) acc += returns[j];
  return acc;
}

struct LpRows {
  std::vector<std::size_t> shock_index;
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
};

inline LpRows lp_rows(std::span<const double> eps, YearMonth shock_start, const MonthlySeries& returns, int h,
                      const LpOptions& opt) {
  const Eigen::Index k = 2 + (opt.controls ? opt.controls->cols() : 0);
  std::vector<std::size_t> idx;
  std::vector<double> ys;
  for (std::size_t t = 0; t < eps.size(); ++t) {
    if (opt.sample_mask && !(*opt.sample_mask)[t]) continue;
    auto y = lp_outcome(returns, shock_start + static_cast<int>(t), h, opt.mode);
    if (!y) continue;
    idx.push_back(t);
    ys.push_back(*y);
  }
  LpRows rows;
  rows.shock_index = idx;
  rows.y = Eigen::Map<const Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
  rows.X.resize(static_cast<Eigen::Index>(idx.size()), k);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto i = static_cast<Eigen::Index>(r);
    rows.X(i, 0) = 1.0;
    rows.X(i, 1) = eps[idx[r]];
    if (opt.controls) rows.X.row(i).tail(k - 2) = opt.controls->row(static_cast<Eigen::Index>(idx[r]));
  }
  return rows;
}

inline IrfEstimate local_projection_span(std::span<const double> eps, YearMonth shock_start,
                                         const MonthlySeries& returns, std::span<const int> horizons,
                                         const LpOptions& opt) {
  require(!horizons.empty(), ErrorKind::TooFewHorizons, "no horizons requested");
  for (std::size_t i = 0; i < horizons.size(); ++i) {
    require(horizons[i] >= 1, ErrorKind::InvalidArgument, "LP horizons must be >= 1");
    require(i == 0 || horizons[i] > horizons[i - 1], ErrorKind::InvalidArgument, "horizons must be increasing");
  }
  if (opt.controls)
    require(opt.controls->rows() == static_cast<Eigen::Index>(eps.size()), ErrorKind::MisalignedIndex,
            "controls must have one row per shock month");
  if (opt.sample_mask)
    require(opt.sample_mask->size() == eps.size(), ErrorKind::MisalignedIndex,
            "sample mask must have one entry per shock month");
  const YearMonth shock_last = shock_start + static_cast<int>(eps.size()) - 1;
  require(shock_last + 1 >= returns.start() && returns.last() >= shock_start + 1, ErrorKind::MisalignedIndex,
          "shock months " + shock_start.str() + ".." + shock_last.str() + " do not overlap returns " +
              returns.start().str() + ".." + returns.last().str());

  IrfEstimate irf;
  irf.horizons.assign(horizons.begin(), horizons.end());
  irf.mode = opt.mode;
  irf.shock_id = opt.shock_id;
  const auto H = static_cast<Eigen::Index>(horizons.size());
  irf.covariance = Eigen::MatrixXd::Zero(H, H);
  for (Eigen::Index j = 0; j < H; ++j) {
    const int h = horizons[static_cast<std::size_t>(j)];
    auto rows = lp_rows(eps, shock_start, returns, h, opt);
    require(static_cast<std::size_t>(rows.y.size()) >= opt.min_obs, ErrorKind::InsufficientOverlap,
            "horizon " + std::to_string(h) + " has " + std::to_string(rows.y.size()) + " usable months (< " +
                std::to_string(opt.min_obs) + ")");
    const auto fit = ols_hac(rows.y, rows.X, h - 1);
    irf.betas.push_back(fit.coefficients(1));
    irf.ses.push_back(fit.se(1));
    irf.nobs.push_back(fit.nobs);
    irf.covariance(j, j) = fit.covariance(1, 1);
  }

  if (opt.covariance == LpCovariance::MovingBlock) {
    // Resample shock months in overlapping blocks from the sample usable at
    // every horizon and take the covariance of the re-estimated betas.
    const int hmax = horizons.back();
    std::vector<std::size_t> common;
    for (std::size_t t = 0; t < eps.size(); ++t) {
      if (opt.sample_mask && !(*opt.sample_mask)[t]) continue;
      if (lp_outcome(returns, shock_start + static_cast<int>(t), hmax, LpMode::Level) &&
          returns.index_of(shock_start + static_cast<int>(t) + 1))
        common.push_back(t);
    }
    const std::size_t n = common.size();
    const auto L = static_cast<std::size_t>(opt.block_len);
    require(L >= 1 && L <= n, ErrorKind::BlockTooLong, "moving-block length exceeds common LP sample");
    std::vector<std::vector<double>> yh(horizons.size(), std::vector<double>(n));
    for (std::size_t j = 0; j < horizons.size(); ++j)
      for (std::size_t r = 0; r < n; ++r)
        yh[j][r] = *lp_outcome(returns, shock_start + static_cast<int>(common[r]), horizons[j], opt.mode);
    const auto k = 2 + (opt.controls ? opt.controls->cols() : 0);
    Eigen::MatrixXd draws(opt.block_reps, H);
    for (int b = 0; b < opt.block_reps; ++b) {
      Rng rng(derive_seed(opt.seed, 0x4C50, static_cast<std::uint64_t>(b)));
      std::uniform_int_distribution<std::size_t> pick(0, n - L);
      std::vector<std::size_t> sel;
      while (sel.size() < n) {
        const std::size_t s = pick(rng);
        for (std::size_t i = 0; i < L && sel.size() < n; ++i) sel.push_back(s + i);
      }
      Eigen::MatrixXd X(static_cast<Eigen::Index>(n), k);
      for (std::size_t r = 0; r < n; ++r) {
        const auto i = static_cast<Eigen::Index>(r);
        X(i, 0) = 1.0;
        X(i, 1) = eps[common[sel[r]]];
        if (opt.controls) X.row(i).tail(k - 2) = opt.controls->row(static_cast<Eigen::Index>(common[sel[r]]));
      }
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
      for (Eigen::Index j = 0; j < H; ++j) {
        Eigen::VectorXd y(static_cast<Eigen::Index>(n));
        for (std::size_t r = 0; r < n; ++r) y(static_cast<Eigen::Index>(r)) = yh[static_cast<std::size_t>(j)][sel[r]];
        draws(b, j) = qr.solve(y)(1);
      }
    }
    const Eigen::RowVectorXd mu = draws.colwise().mean();
    const Eigen::MatrixXd centered = draws.rowwise() - mu;
    irf.covariance = centered.transpose() * centered / std::max(1.0, static_cast<double>(opt.block_reps - 1));
    for (Eigen::Index j = 0; j < H; ++j) irf.ses[static_cast<std::size_t>(j)] = std::sqrt(irf.covariance(j, j));
  }
  return irf;
}

}  // namespace detail

// One regression per horizon of the h-ahead outcome on the shock dated t,
// with HAC lag h - 1. Level outcome: r_{t+h}; cumulative: r_{t+1}+...+r_{t+h}.
inline IrfEstimate local_projection_irf(const ShockSeries& shocks, const MonthlySeries& returns,
                                        std::span<const int> horizons, const LpOptions& opt = {}) {
  return detail::local_projection_span(shocks.eps(), shocks.start(), returns, horizons, opt);
}

// ---------------------------------------------------------------------------
// Geometric fit

struct FitOptions {
  double rho_lo = 0.001;
  double rho_hi = 0.999;
  int grid_points = 512;
  double gmm_condition_limit = 1e12;
};

namespace detail {

struct ProfileObjective {
  Eigen::VectorXd beta_bps;
  Eigen::MatrixXd W;
  std::vector<int> horizons;
  IrfConvention conv;
  bool kappa_nonneg;

  Eigen::VectorXd basis(double rho) const {
    Eigen::VectorXd b(static_cast<Eigen::Index>(horizons.size()));
    for (std::size_t i = 0; i < horizons.size(); ++i) b(static_cast<Eigen::Index>(i)) = irf_basis(rho, horizons[i], conv);
    return b;
  }

  // kappa minimizing (beta - kappa b)' W (beta - kappa b) for fixed rho.
  double kappa_at(double rho) const {
    const Eigen::VectorXd b = basis(rho);
    const double den = b.dot(W * b);
    double k = den > 0.0 ? b.dot(W * beta_bps) / den : 0.0;
    if (kappa_nonneg) k = std::max(0.0, k);
    return k;
  }

  double value(double rho) const {
    const Eigen::VectorXd m = beta_bps - kappa_at(rho) * basis(rho);
    return m.dot(W * m);
  }
};

// Grid scan then golden-section refinement in the bracket around the best
// grid point.
inline double minimize_rho(const ProfileObjective& obj, const FitOptions& opt) {
  const int n = std::max(3, opt.grid_points);
  const double step = (opt.rho_hi - opt.rho_lo) / (n - 1);
  int best = 0;
  double best_val = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    const double v = obj.value(opt.rho_lo + step * i);
    if (v < best_val) {
      best_val = v;
      best = i;
    }
  }
  double a = opt.rho_lo + step * std::max(0, best - 1);
  double b = opt.rho_lo + step * std::min(n - 1, best + 1);
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = obj.value(c), fd = obj.value(d);
  for (int it = 0; it < 200 && (b - a) > 1e-15; ++it) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = obj.value(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = obj.value(d);
    }
  }
  double rho = 0.5 * (a + b);
  // The optimum may sit on a box edge; compare explicitly.
  for (double edge : {opt.rho_lo, opt.rho_hi})
    if (obj.value(edge) < obj.value(rho)) rho = edge;
  return rho;
}

inline double condition_number(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(s.size() - 1) <= 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / s(s.size() - 1);
}

}  // namespace detail

// Fits kappa * b_h(rho) to the IRF vector. kappa is profiled out in closed
// form, rho is found by a 1-D grid + golden-section search on the box.
//   gmm  W = Sigma^{-1}; falls back to diagonal (flagged) when ill-conditioned
//   wls  W = diag(1 / Var(beta_h))
//   nls-constrained  identity weights, kappa >= 0
// Weighted schemes fall back to identity (flagged) when variances are zero.
inline GeometricFit fit_geometric(const IrfEstimate& irf, FitMethod method, IrfConvention conv,
                                  const FitOptions& opt = {}) {
  irf.validate();
  const auto H = static_cast<Eigen::Index>(irf.betas.size());
  require(H >= 3, ErrorKind::TooFewHorizons, "geometric fit needs at least 3 horizons");
  for (int h : irf.horizons)
    require(h >= (conv == IrfConvention::LevelH ? 0 : 1), ErrorKind::InvalidArgument, "horizon not valid for convention");

  detail::ProfileObjective obj;
  obj.beta_bps = Eigen::Map<const Eigen::VectorXd>(irf.betas.data(), H) / kBpsToDecimal;
  obj.horizons = irf.horizons;
  obj.conv = conv;
  obj.kappa_nonneg = method == FitMethod::NlsConstrained;
  const Eigen::MatrixXd sigma_bps = irf.covariance / (kBpsToDecimal * kBpsToDecimal);

  GeometricFit fit;
  fit.method = method;
  fit.convention = conv;
  const Eigen::VectorXd var = sigma_bps.diagonal();
  const bool diag_ok = (var.array() > 0.0).all() && var.allFinite();
  auto diag_weights = [&] {
    if (diag_ok) return Eigen::MatrixXd(var.cwiseInverse().asDiagonal());
    fit.weighting_fallback = true;
    return Eigen::MatrixXd(Eigen::MatrixXd::Identity(H, H));
  };
  switch (method) {
    case FitMethod::Gmm:
      if (diag_ok && detail::condition_number(sigma_bps) <= opt.gmm_condition_limit) {
        obj.W = sigma_bps.inverse();
        obj.W = 0.5 * (obj.W + obj.W.transpose());
      } else {
        fit.weighting_fallback = true;
        obj.W = diag_weights();
      }
      break;
    case FitMethod::Wls: obj.W = diag_weights(); break;
    case FitMethod::NlsConstrained: obj.W = Eigen::MatrixXd::Identity(H, H); break;
  }

  const double rho = detail::minimize_rho(obj, opt);
  const double kappa = obj.kappa_at(rho);
  fit.rho = rho;
  fit.kappa_bps = kappa;
  fit.half_life = half_life(rho);
  fit.objective = obj.value(rho);
  fit.dof = static_cast<int>(H) - 2;
  if (method == FitMethod::Gmm && !fit.weighting_fallback) fit.j_pvalue = stats::chi2_sf(fit.objective, fit.dof);
  const double edge_tol = 1e-7;
  fit.boundary = rho - opt.rho_lo < edge_tol || opt.rho_hi - rho < edge_tol ||
                 (method == FitMethod::NlsConstrained && kappa == 0.0);

  const Eigen::VectorXd b = obj.basis(rho);
  const Eigen::VectorXd resid = obj.beta_bps - kappa * b;
  const double sst = (obj.beta_bps.array() - obj.beta_bps.mean()).square().sum();
  fit.r_squared = sst > 0.0 ? 1.0 - resid.squaredNorm() / sst : (resid.squaredNorm() == 0.0 ? 1.0 : 0.0);

  // Sandwich covariance of (kappa, rho): A^{-1} G'W Sigma W G A^{-1}.
  Eigen::MatrixXd G(H, 2);
  G.col(0) = b;
  for (Eigen::Index i = 0; i < H; ++i) G(i, 1) = kappa * irf_basis_derivative(rho, irf.horizons[static_cast<std::size_t>(i)], conv);
  const Eigen::Matrix2d A = G.transpose() * obj.W * G;
  Eigen::FullPivLU<Eigen::Matrix2d> lu(A);
  if (lu.isInvertible() && sigma_bps.allFinite()) {
    const Eigen::Matrix2d Ainv = lu.inverse();
    Eigen::Matrix2d cov = Ainv * (G.transpose() * obj.W * sigma_bps * obj.W * G) * Ainv;
    fit.param_cov = 0.5 * (cov + cov.transpose());
  }
  return fit;
}

// Model-implied peak over horizons 1..max_h.
struct IrfPeak {
  double beta_bps = 0.0;
  int horizon = 1;
};

inline IrfPeak model_peak(const GeometricFit& fit, int max_h = 12) {
  IrfPeak peak{-std::numeric_limits<double>::infinity(), 1};
  for (int h = 1; h <= max_h; ++h) {
    const double v = fit.kappa_bps * irf_basis(fit.rho, h, fit.convention);
    if (v > peak.beta_bps) peak = {v, h};
  }
  return peak;
}

// ---------------------------------------------------------------------------
// Rolling windows

struct RollingOptions {
  std::size_t window = 60;
  std::size_t step = 1;
  FitMethod method = FitMethod::Wls;
  IrfConvention convention = IrfConvention::LevelHMinus1;
  LpMode mode = LpMode::Level;
  unsigned threads = 1;
  FitOptions fit;
};

struct RollingPoint {
  YearMonth window_start;
  GeometricFit fit;
};

// Window w uses shocks dated start_w .. start_w + window - 1; the sample is
// the months where both series are present. Count = T - window - max(h) + 1
// (stepped) with T the common length.
inline std::vector<RollingPoint> rolling_fit(const ShockSeries& shocks, const MonthlySeries& returns,
                                             std::span<const int> horizons, const RollingOptions& opt = {}) {
  require(!horizons.empty(), ErrorKind::TooFewHorizons, "no horizons requested");
  require(opt.window >= 1 && opt.step >= 1, ErrorKind::InvalidArgument, "window and step must be >= 1");
  const YearMonth first = std::max(shocks.start(), returns.start());
  const YearMonth last = std::min(shocks.last(), returns.last());
  require(last >= first, ErrorKind::MisalignedIndex, "shocks and returns do not overlap");
  const auto T = static_cast<std::size_t>(last - first + 1);
  const auto hmax = static_cast<std::size_t>(horizons.back());
  require(T >= opt.window + hmax, ErrorKind::WindowTooLong,
          "need T >= window + max horizon (" + std::to_string(T) + " < " + std::to_string(opt.window + hmax) + ")");
  const std::size_t count = (T - opt.window - hmax) / opt.step + 1;
  const std::size_t offset = static_cast<std::size_t>(first - shocks.start());
  const std::span<const double> eps(shocks.eps());
  const std::vector<int> hs(horizons.begin(), horizons.end());

  return parallel_map(count, opt.threads, [&](std::size_t w) {
    const std::size_t s = offset + w * opt.step;
    LpOptions lp;
    lp.mode = opt.mode;
    lp.min_obs = std::min<std::size_t>(30, opt.window);
    const auto irf = detail::local_projection_span(eps.subspan(s, opt.window), shocks.month_at(s), returns, hs, lp);
    return RollingPoint{shocks.month_at(s), fit_geometric(irf, opt.method, opt.convention, opt.fit)};
  });
}

}  // namespace sentfeed
