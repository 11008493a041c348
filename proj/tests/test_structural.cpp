#include <gtest/gtest.h>

#include <cmath>

#include "sentfeed/structural.hpp"

using namespace sentfeed;

namespace {

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::InvalidArgument;
}

double lag1_slope(const std::vector<double>& r, const std::vector<bool>& use) {
  double sxy = 0, sxx = 0, mx = 0, my = 0;
  std::size_t n = 0;
  for (std::size_t t = 0; t + 1 < r.size(); ++t)
    if (use[t]) {
      mx += r[t];
      my += r[t + 1];
      ++n;
    }
  mx /= n;
  my /= n;
  for (std::size_t t = 0; t + 1 < r.size(); ++t)
    if (use[t]) {
      sxy += (r[t] - mx) * (r[t + 1] - my);
      sxx += (r[t] - mx) * (r[t] - mx);
    }
  return sxy / sxx;
}

}  // namespace

TEST(HalfLife, CalibrationValues) {
  EXPECT_NEAR(half_life(0.940), 11.2, 0.05);
  EXPECT_NEAR(half_life(0.950), 13.5, 0.05);
  EXPECT_NEAR(half_life(0.5), 1.0, 1e-15);
  EXPECT_TRUE(std::isinf(half_life(1.0)));
  EXPECT_TRUE(std::isinf(half_life(1.0 - 1e-10)));
  EXPECT_EQ(kind_of([] { half_life(0.0); }), ErrorKind::InvalidRho);
  EXPECT_EQ(kind_of([] { half_life(-0.3); }), ErrorKind::InvalidRho);
}

TEST(HalfLife, StrictlyIncreasing) {
  double prev = 0.0;
  for (double rho = 0.01; rho < 0.999; rho += 0.01) {
    const double h = half_life(rho);
    EXPECT_GT(h, prev);
    prev = h;
  }
}

TEST(HalfLife, IrfHalvesAtIntegerHalfLife) {
  const double rho = std::pow(0.5, 1.0 / 10.0);
  ASSERT_NEAR(half_life(rho), 10.0, 1e-12);
  const std::vector<int> h{10};
  const auto v = theoretical_irf({2.0, rho}, h, IrfConvention::LevelH);
  EXPECT_NEAR(v[0], 1.0, 0.01);
}

TEST(TheoreticalIrf, Conventions) {
  const std::vector<int> h12{12};
  EXPECT_NEAR(theoretical_irf({1.06, 0.94}, h12, IrfConvention::LevelH)[0], 1.06 * std::pow(0.94, 12), 1e-15);
  EXPECT_NEAR(theoretical_irf({1.06, 0.94}, h12, IrfConvention::LevelH)[0], 0.5045, 5e-5);
  const std::vector<int> h2{2};
  EXPECT_NEAR(theoretical_irf({1.0, 0.5}, h2, IrfConvention::Cumulative)[0], 1.5, 1e-15);
  const std::vector<int> h1{1};
  EXPECT_NEAR(theoretical_irf({1.06, 0.94}, h1, IrfConvention::LevelHMinus1)[0], 1.06, 1e-15);
  const std::vector<int> h0{0};
  EXPECT_THROW(theoretical_irf({1.0, 0.5}, h0, IrfConvention::Cumulative), Error);
}

TEST(TheoreticalIrf, BasisDerivativeMatchesFiniteDifference) {
  for (auto conv : {IrfConvention::LevelH, IrfConvention::LevelHMinus1, IrfConvention::Cumulative})
    for (int h : {1, 3, 6, 12}) {
      const double rho = 0.83, d = 1e-6;
      const double fd = (irf_basis(rho + d, h, conv) - irf_basis(rho - d, h, conv)) / (2 * d);
      EXPECT_NEAR(irf_basis_derivative(rho, h, conv), fd, 1e-6);
    }
}

TEST(SimulateFeedback, Validation) {
  EXPECT_EQ(kind_of([] { simulate_feedback({1.0, 1.0}, 100, 1); }), ErrorKind::NonstationaryRho);
  EXPECT_EQ(kind_of([] { simulate_feedback({1.0, -0.1}, 100, 1); }), ErrorKind::InvalidRho);
}

TEST(SimulateFeedback, DeterministicAndAligned) {
  const auto a = simulate_feedback_path({1.06, 0.94}, 200, 42);
  const auto b = simulate_feedback_path({1.06, 0.94}, 200, 42);
  EXPECT_EQ(a.returns.values(), b.returns.values());
  ASSERT_EQ(a.shocks.size(), 199u);
  EXPECT_EQ(a.returns[0], 0.0);
  // The shock dated t drives r_{t+1}.
  for (std::size_t t = 0; t + 1 < a.returns.size(); ++t)
    EXPECT_NEAR(a.returns[t + 1], 0.94 * a.returns[t] + 1.06e-4 * a.shocks[t], 1e-15);
}

TEST(SimulateFeedback, AutocorrelationAndVariance) {
  const auto r = simulate_feedback({1.06, 0.94}, 100000, 11, {.burn_in = 1000});
  EXPECT_NEAR(stats::autocorrelation(r.values(), 1), 0.94, 0.01);
  const double k = 1.06e-4;
  const double target = k * k / (1 - 0.94 * 0.94);
  EXPECT_NEAR(stats::variance(r.values()) / target, 1.0, 0.03);
}

TEST(Piecewise, Threshold) {
  EXPECT_NEAR(binding_threshold({1, 1, 1, 0.5}), 1.0, 1e-15);
  EXPECT_NEAR(binding_threshold({2, 0.5, 1, 1}), 2.0, 1e-15);
  EXPECT_EQ(kind_of([] { binding_threshold({1, 0, 1, 1}); }), ErrorKind::NoFiniteThreshold);
}

TEST(Piecewise, Branches) {
  const PiecewiseConfig cfg{1, 1, 1, 0.5};
  const auto lo = piecewise_impact(0.5, cfg);
  EXPECT_NEAR(lo.m, 0.25, 1e-15);
  EXPECT_FALSE(lo.constrained);
  const auto hi = piecewise_impact(2.0, cfg);
  EXPECT_NEAR(hi.m, 1.5, 1e-15);
  EXPECT_TRUE(hi.constrained);
  EXPECT_NEAR(piecewise_impact(1.0, cfg).m, 0.5, 1e-15);
  EXPECT_NEAR(cfg.lambda * (cfg.theta * 1.0 - cfg.s_bar), 0.5, 1e-15);
  const auto s = piecewise_slopes(cfg);
  EXPECT_NEAR(s.kappa_minus, 0.5, 1e-15);
  EXPECT_NEAR(s.kappa_plus, 1.0, 1e-15);
}

TEST(Piecewise, NoCapMeansLinear) {
  const PiecewiseConfig cfg{1.5, 0.0, 2.0, 0.1};
  for (double e : {-5.0, 0.0, 3.0, 50.0}) {
    EXPECT_NEAR(piecewise_impact(e, cfg).m, 3.0 * e, 1e-12);
    EXPECT_FALSE(piecewise_impact(e, cfg).constrained);
  }
}

TEST(Piecewise, ComparativeStatics) {
  const PiecewiseConfig base{1.2, 0.7, 0.9, 0.4};
  const double d = 1e-6;
  auto with = [&](auto mutate) {
    auto c = base;
    mutate(c);
    return c;
  };
  const double dkp_dl =
      (piecewise_slopes(with([&](auto& c) { c.lambda += d; })).kappa_plus - piecewise_slopes(base).kappa_plus) / d;
  EXPECT_NEAR(dkp_dl, base.theta, 1e-6);
  EXPECT_LT(piecewise_slopes(with([&](auto& c) { c.psi += d; })).kappa_minus, piecewise_slopes(base).kappa_minus);
  EXPECT_LT(binding_threshold(with([&](auto& c) { c.lambda += 0.01; })), binding_threshold(base));
  EXPECT_GT(binding_threshold(with([&](auto& c) { c.s_bar += 0.01; })), binding_threshold(base));
}

TEST(Piecewise, Asymmetry) {
  const PiecewiseConfig cfg{1, 1, 1, 0.5};
  for (double e : {1.5, 2.0, 4.0}) EXPECT_GT(std::abs(piecewise_impact(e, cfg).m), std::abs(piecewise_impact(-e, cfg).m));
}

TEST(Piecewise, SimulatedPathUsesImpacts) {
  const PiecewiseConfig cfg{1, 1, 1, 0.5};
  const auto p = simulate_piecewise(cfg, 0.9, 300, 5);
  std::size_t bound = 0;
  for (std::size_t t = 0; t < p.shocks.size(); ++t) {
    const auto m = piecewise_impact(p.shocks[t], cfg);
    bound += m.constrained;
    EXPECT_NEAR(p.returns[t + 1], 0.9 * p.returns[t] + m.m * 1e-4, 1e-15);
  }
  EXPECT_EQ(bound, p.constrained_months);
  EXPECT_GT(bound, 0u);
}

TEST(Mfg, InteriorAtZeroSentiment) {
  const auto r = mfg_clearing({}, 0.0);
  EXPECT_EQ(r.regime, MfgRegime::Interior);
  EXPECT_NEAR(r.implied_f, 2.0, 1e-12);
  EXPECT_NEAR(r.x_R, 1.0, 1e-12);
  EXPECT_NEAR(r.x_I, 1.0, 1e-12);
  EXPECT_NEAR(r.price_deviation, 0.0, 1e-12);
}

TEST(Mfg, ShortCapCorner) {
  const auto r = mfg_clearing({}, 6.0);
  EXPECT_EQ(r.regime, MfgRegime::ShortCapBinding);
  EXPECT_EQ(r.x_I, 0.0);
  EXPECT_NEAR(r.x_R, 2.0, 1e-12);
  EXPECT_NEAR(r.implied_f, -2.0, 1e-12);
  EXPECT_NEAR(r.implied_f + 6.0, 4.0, 1e-12);
  EXPECT_LT(r.clearing_residual, 1e-10);
  EXPECT_TRUE(r.institutional_short_binding);
}

TEST(Mfg, ClearsOnAThetaGrid) {
  MfgConfig capped;
  capped.x_bar = 1.5;
  for (const auto& cfg : {MfgConfig{}, capped})
    for (double theta = -10.0; theta <= 10.0; theta += 0.25) {
      const auto r = mfg_clearing(cfg, theta);
      EXPECT_LT(r.clearing_residual, 1e-10);
      EXPECT_GE(r.x_R, 0.0);
      EXPECT_GE(r.x_I, 0.0);
      if (cfg.x_bar) EXPECT_LE(r.x_I, *cfg.x_bar + 1e-12);
    }
}

TEST(Mfg, RetailCornerUnderPessimism) {
  const auto r = mfg_clearing({}, -10.0);
  EXPECT_EQ(r.regime, MfgRegime::RetailCorner);
  EXPECT_EQ(r.x_R, 0.0);
  EXPECT_NEAR(r.x_I, 2.0, 1e-12);
}

TEST(Mfg, InvalidMasses) {
  MfgConfig c;
  c.n_R = 0.6;
  EXPECT_THROW(mfg_clearing(c, 0.0), Error);
}

TEST(StateParams, AffineAndClip) {
  StateParamSpec spec;
  spec.affine = {-0.25, 0.075, 0.975, -0.0025};
  EXPECT_NEAR(state_params(10, spec).kappa_bps, 0.5, 1e-12);
  EXPECT_NEAR(state_params(30, spec).kappa_bps, 2.0, 1e-12);
  EXPECT_NEAR(state_params(30, spec).rho, 0.90, 1e-12);
  EXPECT_NEAR(state_params(1000, spec).rho, spec.rho_lo, 0.0);
}

TEST(StateParams, LogisticMidpoint) {
  StateParamSpec spec;
  spec.form = StateParamSpec::Form::Logistic;
  spec.logistic.m = 20;
  spec.logistic.alpha = 0.3;
  EXPECT_NEAR(state_params(20, spec).rho, 0.5, 1e-15);
  EXPECT_GT(state_params(10, spec).rho, state_params(30, spec).rho);
}

TEST(CalibrateAffine, ReproducesTargets) {
  const auto spec = calibrate_affine(0.5, 2.0, 0.95, 0.90, 10, 30);
  EXPECT_NEAR(spec.affine.kappa0, -0.25, 1e-12);
  EXPECT_NEAR(spec.affine.kappa1, 0.075, 1e-12);
  EXPECT_NEAR(spec.affine.rho0, 0.975, 1e-12);
  EXPECT_NEAR(spec.affine.rho1, -0.0025, 1e-12);
  EXPECT_NEAR(state_params(10, spec).kappa_bps, 0.5, 1e-12);
  EXPECT_NEAR(state_params(30, spec).rho, 0.90, 1e-12);
  const auto flat = calibrate_affine(1.3, 1.3, 0.9, 0.9, 5, 15);
  EXPECT_EQ(flat.affine.kappa1, 0.0);
  EXPECT_NEAR(flat.affine.kappa0, 1.3, 1e-12);
  EXPECT_EQ(kind_of([] { calibrate_affine(1, 2, 0.9, 0.8, 10, 10); }), ErrorKind::DegenerateStates);
}

TEST(StateDependent, ConstantStateMatchesFeedback) {
  const auto spec = calibrate_affine(1.06, 2.0, 0.94, 0.8, 10, 30);
  const MonthlySeries V({1990, 1}, std::vector<double>(500, 10.0));
  const auto s = simulate_state_dependent(V, spec, 9);
  const auto f = simulate_feedback({1.06, 0.94}, 500, 9);
  for (std::size_t t = 0; t < 500; ++t) EXPECT_NEAR(s.returns[t], f[t], 1e-15);
  ASSERT_EQ(s.kappa_bps.size(), 499u);
}

TEST(StateDependent, ConditionalIrfAndHalfLife) {
  const auto spec = calibrate_affine(1.0, 2.0, 0.95, 0.90, 10, 30);
  const std::vector<int> h{0, 1, 12};
  double prev = std::numeric_limits<double>::infinity();
  for (double V = 5; V <= 40; V += 5) {
    const auto p = state_params(V, spec);
    const auto irf = theoretical_irf(p, h, IrfConvention::LevelH);
    for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(irf[i], p.kappa_bps * std::pow(p.rho, h[i]), 1e-15);
    EXPECT_LT(half_life(p.rho), prev);
    prev = half_life(p.rho);
  }
}

TEST(StateDependent, RegimeAutocorrelations) {
  const auto spec = calibrate_affine(1.0, 2.0, 0.95, 0.90, 10, 30);
  const std::size_t block = 500, blocks = 400;
  std::vector<double> v;
  for (std::size_t b = 0; b < blocks; ++b) v.insert(v.end(), block, b % 2 == 0 ? 10.0 : 30.0);
  const auto path = simulate_state_dependent(MonthlySeries({1900, 1}, v), spec, 77);
  std::vector<bool> low(v.size()), high(v.size());
  for (std::size_t t = 0; t < v.size(); ++t) {
    low[t] = v[t] == 10.0;
    high[t] = v[t] == 30.0;
  }
  EXPECT_NEAR(lag1_slope(path.returns.values(), low), 0.95, 0.02);
  EXPECT_NEAR(lag1_slope(path.returns.values(), high), 0.90, 0.02);
}

TEST(Wald, ClosedForm) {
  GeometricFit a, b;
  a.kappa_bps = 1.0;
  b.kappa_bps = 3.0;
  a.rho = b.rho = 0.9;
  a.param_cov = b.param_cov = Eigen::Matrix2d{{0.5, 0.0}, {0.0, 0.01}};
  const auto w = wald_equality(a, b);
  EXPECT_NEAR(w.kappa.chi2, 4.0, 1e-12);
  EXPECT_NEAR(w.kappa.p, 0.0455, 1e-4);
  EXPECT_EQ(w.rho.chi2, 0.0);
  EXPECT_EQ(w.rho.p, 1.0);
  const auto same = wald_equality(a, a);
  EXPECT_EQ(same.kappa.p, 1.0);
  GeometricFit none;
  EXPECT_EQ(kind_of([&] { wald_equality(a, none); }), ErrorKind::MissingVariance);
}
