#pragma once

// Structural models: geometric feedback, the short-sale-cap piecewise
// equilibrium, two-population clearing with corners, and volatility-state
// dependent coefficients, together with their simulators.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sentfeed/core_series.hpp"
#include "sentfeed/detail/rng.hpp"
#include "sentfeed/detail/stats.hpp"
#include "sentfeed/error.hpp"
#include "sentfeed/fit_types.hpp"

namespace sentfeed {

inline constexpr double kBpsToDecimal = 1e-4;
inline constexpr double kUnitRootTolerance = 1e-9;

// ln(0.5) / ln(rho); +inf once rho is within 1e-9 of one (or above).
inline double half_life(double rho) {
  require(rho > 0.0 && !std::isnan(rho), ErrorKind::InvalidRho, "half-life needs rho > 0");
  if (rho >= 1.0 - kUnitRootTolerance) return std::numeric_limits<double>::infinity();
  return std::log(0.5) / std::log(rho);
}

// Shape b_h(rho) such that the model IRF is kappa * b_h(rho).
inline double irf_basis(double rho, int h, IrfConvention conv) {
  switch (conv) {
    case IrfConvention::LevelH: return std::pow(rho, h);
    case IrfConvention::LevelHMinus1: return std::pow(rho, h - 1);
    case IrfConvention::Cumulative:
      if (rho == 1.0) return static_cast<double>(h);
      return (1.0 - std::pow(rho, h)) / (1.0 - rho);
  }
  return 0.0;
}

// d b_h / d rho.
inline double irf_basis_derivative(double rho, int h, IrfConvention conv) {
  switch (conv) {
    case IrfConvention::LevelH: return h == 0 ? 0.0 : h * std::pow(rho, h - 1);
    case IrfConvention::LevelHMinus1: return h <= 1 ? 0.0 : (h - 1) * std::pow(rho, h - 2);
    case IrfConvention::Cumulative: {
      double d = 0.0;  // sum_{j=1}^{h-1} j rho^{j-1}
      for (int j = 1; j < h; ++j) d += j * std::pow(rho, j - 1);
      return d;
    }
  }
  return 0.0;
}

inline std::vector<double> theoretical_irf(const FeedbackParams& p, std::span<const int> horizons, IrfConvention conv) {
  std::vector<double> out;
  out.reserve(horizons.size());
  for (int h : horizons) {
    require(h >= (conv == IrfConvention::LevelH ? 0 : 1), ErrorKind::InvalidArgument,
            "horizon " + std::to_string(h) + " not allowed for " + std::string(to_string(conv)));
    out.push_back(p.kappa_bps * irf_basis(p.rho, h, conv));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Simulation

struct FeedbackPath {
  MonthlySeries returns;  // decimal per month
  ShockSeries shocks;     // shock at month t drives the return of month t+1
};

struct StatePath {
  MonthlySeries returns;
  ShockSeries shocks;
  std::vector<double> kappa_bps;  // coefficient applied to the shock dated t
  std::vector<double> rho;        // coefficient applied to r_t
};

namespace detail {

// r_0 = 0; r_{t+1} = rho_t r_t + kappa_t eps_{t+1}. The first `burn_in`
// periods are discarded. Kept innovations are rescaled to unit sample
// variance so they form a valid ShockSeries.
inline FeedbackPath simulate_random_coefficient(std::span<const double> kappa_bps, std::span<const double> rho,
                                                std::size_t burn_in, std::uint64_t seed, YearMonth start) {
  const std::size_t total = rho.size();
  const std::size_t T = total - burn_in;
  require(T >= 2, ErrorKind::SeriesTooShort, "simulation needs T >= 2");
  Rng rng(seed);
  std::vector<double> raw = standard_normals(rng, total - 1);
  {
    std::vector<double> kept(raw.begin() + static_cast<std::ptrdiff_t>(burn_in), raw.end());
    const double sd = stats::stddev(kept);
    if (sd > 0.0)
      for (std::size_t i = burn_in; i < raw.size(); ++i) raw[i] /= sd;
  }
  std::vector<double> r(total, 0.0);
  for (std::size_t t = 0; t + 1 < total; ++t)
    r[t + 1] = rho[t] * r[t] + kappa_bps[t] * kBpsToDecimal * raw[t];

  FeedbackPath path;
  path.returns = MonthlySeries(start, std::vector<double>(r.begin() + static_cast<std::ptrdiff_t>(burn_in), r.end()));
  path.shocks = ShockSeries::standardized(start, std::vector<double>(raw.begin() + static_cast<std::ptrdiff_t>(burn_in), raw.end()));
  return path;
}

}  // namespace detail

struct SimulationOptions {
  std::size_t burn_in = 0;
  YearMonth start{1990, 1};
};

// Returns and the driving shocks. Shock series has T - 1 entries (months
// start .. start+T-2).
inline FeedbackPath simulate_feedback_path(const FeedbackParams& p, std::size_t T, std::uint64_t seed,
                                           const SimulationOptions& opt = {}) {
  require(T >= 2, ErrorKind::SeriesTooShort, "simulation needs T >= 2");
  require(std::isfinite(p.kappa_bps), ErrorKind::InvalidArgument, "kappa must be finite");
  require(p.rho >= 0.0, ErrorKind::InvalidRho, "simulation needs rho >= 0");
  require(p.rho < 1.0, ErrorKind::NonstationaryRho, "simulation needs rho < 1");
  const std::size_t total = T + opt.burn_in;
  std::vector<double> kappa(total, p.kappa_bps), rho(total, p.rho);
  return detail::simulate_random_coefficient(kappa, rho, opt.burn_in, seed, opt.start);
}

inline MonthlySeries simulate_feedback(const FeedbackParams& p, std::size_t T, std::uint64_t seed,
                                       const SimulationOptions& opt = {}) {
  return simulate_feedback_path(p, T, seed, opt).returns;
}

// ---------------------------------------------------------------------------
// Short-sale cap: piecewise impact

struct PiecewiseConfig {
  double lambda = 1.0;  // price impact per unit demand
  double psi = 1.0;     // arbitrageur risk-bearing
  double theta = 1.0;   // retail demand per unit shock
  double s_bar = 1.0;   // short-sale cap

  void validate() const {
    require(std::isfinite(lambda) && std::isfinite(psi) && std::isfinite(theta) && std::isfinite(s_bar),
            ErrorKind::InvalidArgument, "piecewise parameters must be finite");
    require(lambda > 0.0 && theta > 0.0, ErrorKind::InvalidArgument, "lambda and theta must be > 0");
    require(psi >= 0.0 && s_bar >= 0.0, ErrorKind::InvalidArgument, "psi and s_bar must be >= 0");
  }
};

// Shock level above which the arbitrageur's short position hits the cap.
inline double binding_threshold(const PiecewiseConfig& cfg) {
  cfg.validate();
  require(cfg.psi > 0.0, ErrorKind::NoFiniteThreshold, "psi = 0: the cap never binds");
  return (1.0 + cfg.lambda * cfg.psi) * cfg.s_bar / (cfg.lambda * cfg.theta * cfg.psi);
}

struct PiecewiseImpact {
  double m = 0.0;
  bool constrained = false;
};

inline PiecewiseImpact piecewise_impact(double eps, const PiecewiseConfig& cfg) {
  cfg.validate();
  const double lt = cfg.lambda * cfg.theta;
  if (cfg.psi > 0.0 && eps > binding_threshold(cfg)) return {cfg.lambda * (cfg.theta * eps - cfg.s_bar), true};
  return {lt / (1.0 + cfg.lambda * cfg.psi) * eps, false};
}

struct PiecewiseSlopes {
  double kappa_minus = 0.0;  // slack-cap slope
  double kappa_plus = 0.0;   // binding-cap slope
};

inline PiecewiseSlopes piecewise_slopes(const PiecewiseConfig& cfg) {
  cfg.validate();
  const double lt = cfg.lambda * cfg.theta;
  return {lt / (1.0 + cfg.lambda * cfg.psi), lt};
}

// r_0 = 0; r_{t+1} = rho r_t + impact_t, impact in bps. Returns one month
// more than the impact vector, starting at `start`.
inline MonthlySeries returns_from_impacts(double rho, std::span<const double> impact_bps, YearMonth start) {
  require(rho >= 0.0, ErrorKind::InvalidRho, "rho must be >= 0");
  require(rho < 1.0, ErrorKind::NonstationaryRho, "rho must be < 1");
  std::vector<double> r(impact_bps.size() + 1, 0.0);
  for (std::size_t t = 0; t < impact_bps.size(); ++t) r[t + 1] = rho * r[t] + impact_bps[t] * kBpsToDecimal;
  return MonthlySeries(start, std::move(r));
}

struct PiecewisePath {
  MonthlySeries returns;
  ShockSeries shocks;
  std::size_t constrained_months = 0;
};

// Feedback path whose impact is the capped-arbitrage response m(eps) (bps).
inline PiecewisePath simulate_piecewise(const PiecewiseConfig& cfg, double rho, std::size_t T, std::uint64_t seed,
                                        YearMonth start = {1990, 1}) {
  require(T >= 3, ErrorKind::SeriesTooShort, "simulation needs T >= 3");
  Rng rng(seed);
  const auto shocks = ShockSeries::standardized(start, standard_normals(rng, T - 1));
  std::vector<double> impact(shocks.size());
  PiecewisePath path;
  for (std::size_t t = 0; t < shocks.size(); ++t) {
    const auto m = piecewise_impact(shocks[t], cfg);
    impact[t] = m.m;
    path.constrained_months += m.constrained ? 1 : 0;
  }
  path.returns = returns_from_impacts(rho, impact, start);
  path.shocks = shocks;
  return path;
}

// ---------------------------------------------------------------------------
// Two-population clearing

struct MfgConfig {
  double n_R = 0.5;
  double n_I = 0.5;
  double gamma_R = 2.0;
  double gamma_I = 2.0;
  double sigma2 = 1.0;
  std::optional<double> x_bar;  // institutional funding cap
  double supply = 1.0;

  void validate() const {
    require(n_R > 0.0 && n_I > 0.0 && std::abs(n_R + n_I - 1.0) <= 1e-12, ErrorKind::InvalidArgument,
            "population masses must be positive and sum to one");
    require(gamma_R > 0.0 && gamma_I > 0.0 && sigma2 > 0.0, ErrorKind::InvalidArgument,
            "risk aversions and variance must be > 0");
    require(!x_bar || *x_bar > 0.0, ErrorKind::InvalidArgument, "funding cap must be > 0");
    require(supply > 0.0, ErrorKind::InvalidArgument, "supply must be > 0");
  }
};

enum class MfgRegime { Interior, ShortCapBinding, FundingCapBinding, RetailCorner };

constexpr std::string_view to_string(MfgRegime r) {
  switch (r) {
    case MfgRegime::Interior: return "interior";
    case MfgRegime::ShortCapBinding: return "short-cap-binding";
    case MfgRegime::FundingCapBinding: return "funding-cap-binding";
    case MfgRegime::RetailCorner: return "retail-corner";
  }
  return "?";
}

struct EquilibriumResult {
  // Fall in the required expected excess return relative to the zero-sentiment
  // interior equilibrium; positive means the price sits above fundamentals.
  double price_deviation = 0.0;
  double x_R = 0.0;
  double x_I = 0.0;
  MfgRegime regime = MfgRegime::Interior;
  double implied_f = 0.0;
  bool institutional_short_binding = false;
  bool retail_nonneg_binding = false;
  bool funding_cap_binding = false;
  double clearing_residual = 0.0;
};

// Tries the interior, then single corners (institutional short-sale, retail
// non-negativity, funding cap), then double corners. A regime is accepted
// only if its primal constraints hold and the binding constraints would be
// violated by the unconstrained demand (complementary slackness).
inline EquilibriumResult mfg_clearing(const MfgConfig& cfg, double theta) {
  cfg.validate();
  const double kR = cfg.gamma_R * cfg.sigma2;
  const double kI = cfg.gamma_I * cfg.sigma2;
  const double S = cfg.supply;
  const double cap = cfg.x_bar.value_or(std::numeric_limits<double>::infinity());
  const double tol = 1e-12;
  const double f0 = S / (cfg.n_R / kR + cfg.n_I / kI);

  auto finish = [&](double f, double xR, double xI, MfgRegime regime) {
    EquilibriumResult r;
    r.implied_f = f;
    r.x_R = xR;
    r.x_I = xI;
    r.regime = regime;
    r.price_deviation = f0 - f;
    r.institutional_short_binding = xI == 0.0 && f / kI < 0.0;
    r.retail_nonneg_binding = xR == 0.0 && (f + theta) / kR < 0.0;
    r.funding_cap_binding = cfg.x_bar.has_value() && xI == cap;
    r.clearing_residual = std::abs(cfg.n_R * xR + cfg.n_I * xI - S);
    require(r.clearing_residual < 1e-10, ErrorKind::Infeasible, "clearing residual too large");
    return r;
  };

  // Interior.
  {
    const double f = (S - cfg.n_R * theta / kR) / (cfg.n_R / kR + cfg.n_I / kI);
    const double xR = (f + theta) / kR;
    const double xI = f / kI;
    if (xR >= -tol && xI >= -tol && xI <= cap + tol) {
      // Clean rounding at the edges, then recompute one demand from clearing.
      const double xI_c = std::clamp(xI, 0.0, cap);
      return finish(f, (S - cfg.n_I * xI_c) / cfg.n_R, xI_c, MfgRegime::Interior);
    }
  }
  // Institutional short-sale constraint binds: retail holds the supply.
  {
    const double xR = S / cfg.n_R;
    const double f = kR * xR - theta;
    if (f / kI <= tol) return finish(f, xR, 0.0, MfgRegime::ShortCapBinding);
  }
  // Retail non-negativity binds: institutions hold the supply.
  {
    const double xI = S / cfg.n_I;
    const double f = kI * xI;
    if ((f + theta) / kR <= tol && xI <= cap + tol) return finish(f, 0.0, xI, MfgRegime::RetailCorner);
  }
  // Funding cap binds.
  if (cfg.x_bar) {
    const double xI = cap;
    const double xR = (S - cfg.n_I * xI) / cfg.n_R;
    const double f = kR * xR - theta;
    if (xR >= -tol && f / kI >= xI - tol) return finish(f, std::max(xR, 0.0), xI, MfgRegime::FundingCapBinding);
    // Double corner: retail at zero and institutions at the cap.
    if (std::abs(cfg.n_I * cap - S) <= tol) {
      const double fd = kI * cap;
      if ((fd + theta) / kR <= tol) {
        auto r = finish(fd, 0.0, cap, MfgRegime::RetailCorner);
        r.funding_cap_binding = true;
        return r;
      }
    }
  }
  fail(ErrorKind::Infeasible, "no regime clears the market under {x_I >= 0, x_R >= 0, x_I <= x_bar} at theta = " +
                                  format_double(theta));
}

// ---------------------------------------------------------------------------
// State-dependent coefficients

struct AffineStateCoeffs {
  double kappa0 = 0.0, kappa1 = 0.0;
  double rho0 = 0.0, rho1 = 0.0;
};

struct LogisticStateCoeffs {
  double alpha = 1.0;  // rho slope
  double m = 0.0;      // rho midpoint
  double kappa_min = 0.0, kappa_max = 1.0;
  double beta = 1.0;  // kappa slope
  double m_kappa = 0.0;
};

struct StateParamSpec {
  enum class Form { Affine, Logistic };
  Form form = Form::Affine;
  AffineStateCoeffs affine;
  LogisticStateCoeffs logistic;
  double rho_lo = 0.001;
  double rho_hi = 0.999;
};

inline FeedbackParams state_params(double V, const StateParamSpec& spec) {
  require(std::isfinite(V), ErrorKind::InvalidArgument, "state value must be finite");
  require(0.0 < spec.rho_lo && spec.rho_lo < spec.rho_hi && spec.rho_hi < 1.0, ErrorKind::InvalidArgument,
          "rho clip bounds must satisfy 0 < lo < hi < 1");
  double kappa = 0.0, rho = 0.0;
  if (spec.form == StateParamSpec::Form::Affine) {
    kappa = spec.affine.kappa0 + spec.affine.kappa1 * V;
    rho = spec.affine.rho0 + spec.affine.rho1 * V;
  } else {
    const auto& c = spec.logistic;
    rho = 1.0 / (1.0 + std::exp(c.alpha * (V - c.m)));
    kappa = c.kappa_min + (c.kappa_max - c.kappa_min) / (1.0 + std::exp(-c.beta * (V - c.m_kappa)));
  }
  return {kappa, std::clamp(rho, spec.rho_lo, spec.rho_hi)};
}

// Affine spec passing through (V_L, kappa_L, rho_L) and (V_H, kappa_H, rho_H).
inline StateParamSpec calibrate_affine(double kappa_L, double kappa_H, double rho_L, double rho_H, double V_L,
                                       double V_H) {
  require(V_L != V_H, ErrorKind::DegenerateStates, "calibration states must differ");
  const double d = V_L - V_H;
  StateParamSpec spec;
  spec.form = StateParamSpec::Form::Affine;
  spec.affine.kappa0 = (kappa_H * V_L - kappa_L * V_H) / d;
  spec.affine.kappa1 = (kappa_L - kappa_H) / d;
  spec.affine.rho0 = (rho_H * V_L - rho_L * V_H) / d;
  spec.affine.rho1 = (rho_L - rho_H) / d;
  return spec;
}

// r_{t+1} = rho(V_t) r_t + kappa(V_t) eps_{t+1}; same draw scheme as
// simulate_feedback, so a constant V reproduces it exactly.
inline StatePath simulate_state_dependent(const MonthlySeries& V, const StateParamSpec& spec, std::uint64_t seed) {
  require(V.size() >= 2, ErrorKind::SeriesTooShort, "state series needs >= 2 months");
  std::vector<double> kappa(V.size()), rho(V.size());
  for (std::size_t t = 0; t < V.size(); ++t) {
    const auto p = state_params(V[t], spec);
    require(p.rho < 1.0, ErrorKind::NonstationaryRho, "rho(V) must be < 1");
    kappa[t] = p.kappa_bps;
    rho[t] = p.rho;
  }
  auto path = detail::simulate_random_coefficient(kappa, rho, 0, seed, V.start());
  kappa.pop_back();
  rho.pop_back();
  return {std::move(path.returns), std::move(path.shocks), std::move(kappa), std::move(rho)};
}

// ---------------------------------------------------------------------------
// Equality of subsample fits

struct WaldTest {
  double chi2 = 0.0;
  double p = 1.0;
};

struct WaldEquality {
  WaldTest kappa;
  WaldTest rho;
};

// (theta_L - theta_H)^2 / (var_L + var_H), chi-square(1); subsamples are
// treated as independent.
inline WaldEquality wald_equality(const GeometricFit& low, const GeometricFit& high) {
  require(low.param_cov.has_value() && high.param_cov.has_value(), ErrorKind::MissingVariance,
          "both fits need a parameter covariance");
  auto one = [](double a, double b, double va, double vb) {
    WaldTest w;
    const double diff = a - b;
    if (diff == 0.0) return w;
    const double v = va + vb;
    w.chi2 = v > 0.0 ? diff * diff / v : std::numeric_limits<double>::infinity();
    w.p = stats::chi2_sf(w.chi2, 1.0);
    return w;
  };
  return {one(low.kappa_bps, high.kappa_bps, (*low.param_cov)(0, 0), (*high.param_cov)(0, 0)),
          one(low.rho, high.rho, (*low.param_cov)(1, 1), (*high.param_cov)(1, 1))};
}

}  // namespace sentfeed
