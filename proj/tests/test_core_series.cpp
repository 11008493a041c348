#include <gtest/gtest.h>

#include <sstream>

#include "sentfeed/core_series.hpp"
#include "sentfeed/detail/rng.hpp"

using namespace sentfeed;

namespace {

MonthlySeries ar1_series(double alpha, double phi, double sigma, std::size_t T, std::uint64_t seed) {
  Rng rng(seed);
  const auto u = standard_normals(rng, T);
  std::vector<double> s(T);
  double prev = alpha / (1.0 - phi);
  for (std::size_t t = 0; t < T; ++t) {
    prev = alpha + phi * prev + sigma * u[t];
    s[t] = prev;
  }
  return MonthlySeries({1980, 1}, s);
}

}  // namespace

TEST(YearMonth, ParseAndArithmetic) {
  const auto m = YearMonth::parse("2019-10");
  EXPECT_EQ(m.year(), 2019);
  EXPECT_EQ(m.month(), 10);
  EXPECT_EQ((m + 3).str(), "2020-01");
  EXPECT_EQ((m - 10).str(), "2018-12");
  EXPECT_EQ(YearMonth(2020, 1) - YearMonth(2019, 10), 3);
  EXPECT_THROW(YearMonth::parse("2019-13"), Error);
  EXPECT_THROW(YearMonth::parse("201910"), Error);
}

TEST(MonthlySeries, RejectsGapsAndDisorder) {
  using P = std::pair<YearMonth, double>;
  try {
    MonthlySeries::from_pairs({P{{2000, 1}, 1.0}, P{{2000, 3}, 2.0}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingMonth);
  }
  try {
    MonthlySeries::from_pairs({P{{2000, 2}, 1.0}, P{{2000, 1}, 2.0}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonMonotoneDates);
  }
}

TEST(Ar1, TooShortSeries) {
  try {
    estimate_ar1(MonthlySeries({2000, 1}, std::vector<double>(10, 1.0)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SeriesTooShort);
  }
}

TEST(Ar1, ConstantSeriesIsDegenerate) {
  try {
    estimate_ar1(MonthlySeries({2000, 1}, std::vector<double>(60, 3.0)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateSeries);
  }
}

TEST(Ar1, RecoversPhiMedianOverSeeds) {
  std::vector<double> phis;
  for (std::uint64_t s = 0; s < 100; ++s) phis.push_back(estimate_ar1(ar1_series(0.0, 0.8, 1.0, 10000, 100 + s)).phi);
  EXPECT_NEAR(stats::quantile(phis, 0.5), 0.8, 0.02);
}

TEST(Ar1, MatchesClosedFormOls) {
  const auto s = ar1_series(0.3, 0.6, 2.0, 500, 7);
  const auto fit = estimate_ar1(s);
  // Slope of s_t on s_{t-1} by the textbook covariance ratio.
  double mx = 0, my = 0;
  const std::size_t n = s.size() - 1;
  for (std::size_t t = 1; t < s.size(); ++t) {
    mx += s[t - 1];
    my += s[t];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t t = 1; t < s.size(); ++t) {
    sxy += (s[t - 1] - mx) * (s[t] - my);
    sxx += (s[t - 1] - mx) * (s[t - 1] - mx);
  }
  EXPECT_NEAR(fit.phi, sxy / sxx, 1e-10);
  EXPECT_EQ(fit.residuals.size(), s.size() - 1);
  EXPECT_EQ(fit.residuals.start(), s.start() + 1);
  EXPECT_GT(fit.se_phi, 0.0);
}

TEST(Shocks, UnitVariance) {
  const auto fit = estimate_ar1(ar1_series(0.234, 0.847, 2.156, 420, 3));
  const auto eps = standardize_shocks(fit);
  EXPECT_NEAR(stats::variance(eps.eps()), 1.0, 1e-12);
  const double sd = stats::stddev(fit.residuals.values());
  for (std::size_t i = 0; i < eps.size(); ++i) EXPECT_NEAR(eps[i], fit.residuals[i] / sd, 1e-12);
  const auto flipped = standardize_shocks(fit, true);
  EXPECT_TRUE(flipped.flipped());
  EXPECT_NEAR(flipped[5], -eps[5], 1e-15);
}

TEST(Shocks, ConstructorRejectsNonUnitVariance) {
  EXPECT_THROW(ShockSeries({2000, 1}, {1.0, 2.0, 4.0}), Error);
}

TEST(Cumulative, HandSum) {
  const MonthlySeries r({2000, 1}, {0.01, 0.02, 0.03});
  // Value at the first month sums the next two returns.
  const auto c = cumulative_returns(r, 2);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_NEAR(c[0], 0.05, 1e-15);
  const auto c1 = cumulative_returns(r, 1);
  EXPECT_NEAR(c1[0], 0.02, 1e-15);
  EXPECT_NEAR(c1[1], 0.03, 1e-15);
  EXPECT_THROW(cumulative_returns(r, 3), Error);
}

TEST(SplitSign, Partition) {
  const std::vector<double> eps{-1.0, 0.5, 0.0, -2.0};
  const auto s = split_sign(eps);
  for (std::size_t i = 0; i < eps.size(); ++i) EXPECT_DOUBLE_EQ(s.positive[i] + s.negative[i], eps[i]);
  const auto neg = split_sign(std::vector<double>{-1.0, -3.0});
  for (double v : neg.positive) EXPECT_EQ(v, 0.0);
}

TEST(MonthlyCsv, RoundTrip) {
  const MonthlySeries s({1999, 11}, {1.5, -2.25, 0.125});
  std::stringstream ss;
  write_monthly_csv(ss, s);
  const auto back = parse_monthly_csv(ss);
  EXPECT_EQ(back.start(), s.start());
  EXPECT_EQ(back.values(), s.values());
}

TEST(MonthlyCsv, BadRowsNameTheLine) {
  std::stringstream ss("month,value\n2000-01,1\n2000-02,abc\n");
  try {
    parse_monthly_csv(ss, "x.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SchemaViolation);
    EXPECT_NE(std::string(e.what()).find("x.csv:3"), std::string::npos);
  }
}
