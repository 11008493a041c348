#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sentfeed/portfolio.hpp"

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

FirmMonthPanel signal_panel(int n_firms, int n_months, std::uint64_t seed, bool equal_me = false) {
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  FirmMonthPanel p;
  p.extra["signal"];
  for (int i = 0; i < n_firms; ++i)
    for (int t = 0; t < n_months; ++t) {
      p.push_row("S" + std::to_string(i), YearMonth(2001, 1) + t, 0.01 * z(rng), 0.5, 0.5, 1,
                 equal_me ? 5.0 : std::exp(z(rng)), 20);
      p.extra["signal"].push_back(z(rng));
    }
  return p;
}

}  // namespace

TEST(Breakpoints, TwentyDistinctValuesGiveDecilesOfTwo) {
  std::vector<double> z(20);
  for (int i = 0; i < 20; ++i) z[static_cast<std::size_t>(i)] = i + 1.0;
  const auto bp = compute_breakpoints(z, 10);
  ASSERT_EQ(bp.cutoffs.size(), 9u);
  std::vector<int> counts(10, 0);
  for (double v : z) ++counts[static_cast<std::size_t>(bp.bucket_of(v))];
  for (int c : counts) EXPECT_EQ(c, 2);
  EXPECT_FALSE(bp.degenerate);
}

TEST(Breakpoints, FlaggedSubsetBucketsEveryone) {
  // Flagged half is 0..9; its median cutoff 4.5 splits the unflagged half too.
  std::vector<double> z;
  bool flag[20] = {};
  for (int i = 0; i < 10; ++i) {
    z.push_back(i);
    flag[i] = true;
  }
  for (int i = 0; i < 10; ++i) z.push_back(i + 0.25);
  const auto bp = compute_breakpoints(z, std::span<const bool>(flag, 20), 2);
  EXPECT_DOUBLE_EQ(bp.cutoffs[0], 4.5);
  EXPECT_EQ(bp.bucket_of(4.25), 0);
  EXPECT_EQ(bp.bucket_of(5.25), 1);
}

TEST(Breakpoints, TooFewInUniverse) {
  const std::vector<double> z{1, 2, 3};
  EXPECT_EQ(kind_of([&] { compute_breakpoints(z, 10); }), ErrorKind::TooFewInUniverse);
}

TEST(Sort, SingleMonthIsBijection) {
  FirmMonthPanel p;
  p.extra["signal"];
  for (int i = 0; i < 10; ++i) {
    p.push_row("F" + std::to_string(i), {2000, 1}, 0, 0, 0, 0, 1, 1);
    p.extra["signal"].push_back(10.0 - i);
  }
  const auto m = form_portfolios(p, {});
  ASSERT_EQ(m.months.size(), 1u);
  std::vector<int> b = m.months[0].bucket;
  std::sort(b.begin(), b.end());
  for (int q = 0; q < 10; ++q) EXPECT_EQ(b[static_cast<std::size_t>(q)], q);
  EXPECT_EQ(m.months[0].bucket[0], 9);
}

TEST(Sort, MissingSignal) {
  FirmMonthPanel p;
  p.push_row("A", {2000, 1}, 0, 0, 0, 0, 1, 1);
  EXPECT_EQ(kind_of([&] { form_portfolios(p, {}); }), ErrorKind::MissingSignal);
}

TEST(Sort, ValueWeightHandExample) {
  FirmMonthPanel p;
  p.extra["signal"];
  p.push_row("A", {2000, 1}, 0.0, 0, 0, 0, 1.0, 1);
  p.push_row("B", {2000, 1}, 0.0, 0, 0, 0, 3.0, 1);
  p.push_row("A", {2000, 2}, 0.04, 0, 0, 0, 1.0, 1);
  p.push_row("B", {2000, 2}, 0.00, 0, 0, 0, 3.0, 1);
  p.extra["signal"] = {1.0, 1.0, 1.0, 1.0};
  SortConfig cfg;
  cfg.n_buckets = 2;
  const auto mem = form_portfolios(p, cfg);
  // Equal signals all land in the bottom bucket.
  const auto vw = portfolio_returns(mem, p, Weighting::Value);
  EXPECT_NEAR(vw.bucket_ret[0][0], 0.01, 1e-15);
  const auto ew = portfolio_returns(mem, p, Weighting::Equal);
  EXPECT_NEAR(ew.bucket_ret[0][0], 0.02, 1e-15);
  EXPECT_EQ(vw.skipped_months, 2);
  EXPECT_EQ(mem.degenerate_months, 0);
}

TEST(Sort, ExitUsesDelistingReturnOrDrops) {
  FirmMonthPanel p;
  p.extra["signal"];
  p.extra["dlret"];
  auto row = [&](const std::string& f, YearMonth m, double r, double s, double dl) {
    p.push_row(f, m, r, 0, 0, 0, 1, 1);
    p.extra["signal"].push_back(s);
    p.extra["dlret"].push_back(dl);
  };
  const double nan = std::numeric_limits<double>::quiet_NaN();
  row("A", {2000, 1}, 0, 1.0, nan);
  row("B", {2000, 1}, 0, 2.0, -0.3);
  row("C", {2000, 1}, 0, 3.0, nan);
  row("D", {2000, 1}, 0, 4.0, nan);
  row("A", {2000, 2}, 0.01, 1.0, nan);
  row("D", {2000, 2}, 0.05, 4.0, nan);
  SortConfig cfg;
  cfg.n_buckets = 2;
  const auto ps = portfolio_returns(form_portfolios(p, cfg), p, Weighting::Equal);
  // B exits with a delisting return; C exits without one and is dropped.
  EXPECT_NEAR(ps.bucket_ret[0][0], (0.01 - 0.3) / 2, 1e-15);
  EXPECT_NEAR(ps.bucket_ret[0][1], 0.05, 1e-15);
  EXPECT_EQ(ps.delisting_used, 1u);
  EXPECT_EQ(ps.dropped_exits, 1u + 2u);  // plus every firm's exit after the last month
}

TEST(Sort, MatchesBruteForce) {
  const auto p = signal_panel(20, 12, 5);
  SortConfig cfg;
  cfg.n_buckets = 5;
  for (auto w : {Weighting::Equal, Weighting::Value}) {
    const auto ps = portfolio_returns(form_portfolios(p, cfg), p, w);
    const auto idx = p.row_index();
    const auto& z = p.column("signal");
    // The last formation month has no holding month in the panel.
    for (std::size_t m = 0; m + 1 < ps.months.size(); ++m) {
      const YearMonth form = ps.months[m] - 1;
      // Rank-based oracle: with 20 distinct signals each quintile holds the
      // ranks 4q..4q+3.
      std::vector<std::pair<double, std::size_t>> ranked;
      for (std::size_t i = 0; i < p.size(); ++i)
        if (p.month[i] == form) ranked.emplace_back(z[i], i);
      std::sort(ranked.begin(), ranked.end());
      for (int q = 0; q < 5; ++q) {
        double num = 0, den = 0;
        for (int j = 4 * q; j < 4 * q + 4; ++j) {
          const auto i = ranked[static_cast<std::size_t>(j)].second;
          const double wt = w == Weighting::Equal ? 1.0 : p.me[i];
          num += wt * p.ret[idx.at({p.firm_id[i], ps.months[m].serial()})];
          den += wt;
        }
        EXPECT_NEAR(ps.bucket_ret[m][static_cast<std::size_t>(q)], num / den, 1e-12);
      }
      EXPECT_NEAR(ps.ls[m], ps.bucket_ret[m][4] - ps.bucket_ret[m][0], 1e-12);
    }
  }
}

TEST(Sort, EqualMeMakesVwEqualEw) {
  const auto p = signal_panel(30, 10, 6, true);
  const auto mem = form_portfolios(p, {});
  const auto ew = portfolio_returns(mem, p, Weighting::Equal);
  const auto vw = portfolio_returns(mem, p, Weighting::Value);
  for (std::size_t m = 0; m < ew.months.size(); ++m)
    for (std::size_t q = 0; q < 10; ++q)
      if (ew.counts[m][q] > 0) EXPECT_NEAR(ew.bucket_ret[m][q], vw.bucket_ret[m][q], 1e-12);
}

TEST(Costs, FullReplacementDrag) {
  // Two months of four disjoint names each: every leg turns over completely.
  FirmMonthPanel p;
  p.extra["signal"];
  auto row = [&](const std::string& f, YearMonth m, double s) {
    p.push_row(f, m, 0.01, 0, 0, 0, 1, 1);
    p.extra["signal"].push_back(s);
  };
  for (int t = 0; t < 3; ++t) {
    const YearMonth m = YearMonth(2000, 1) + t;
    const bool flip = t % 2 == 1;
    row("A", m, flip ? 4 : 1);
    row("B", m, flip ? 3 : 2);
    row("C", m, flip ? 2 : 3);
    row("D", m, flip ? 1 : 4);
  }
  SortConfig cfg;
  cfg.n_buckets = 2;
  const auto ps = portfolio_returns(form_portfolios(p, cfg), p, Weighting::Equal);
  const std::vector<double> costs{10.0};
  const auto cr = turnover_and_costs(ps, costs);
  ASSERT_EQ(cr.gross.size(), 2u);
  EXPECT_TRUE(cr.uncharged[0]);
  EXPECT_EQ(cr.net[0][0], cr.gross[0]);
  EXPECT_DOUBLE_EQ(cr.turnover_long[1], 1.0);
  EXPECT_DOUBLE_EQ(cr.turnover_short[1], 1.0);
  EXPECT_NEAR(cr.gross[1] - cr.net[0][1], 0.0020, 1e-15);
}

TEST(Costs, UnchangedPortfolioHasOnlyDriftTurnover) {
  FirmMonthPanel p;
  p.extra["signal"];
  for (int t = 0; t < 4; ++t)
    for (int i = 0; i < 4; ++i) {
      p.push_row("F" + std::to_string(i), YearMonth(2000, 1) + t, 0.0, 0, 0, 0, 1, 1);
      p.extra["signal"].push_back(i);
    }
  SortConfig cfg;
  cfg.n_buckets = 2;
  const auto ps = portfolio_returns(form_portfolios(p, cfg), p, Weighting::Equal);
  const std::vector<double> costs{25.0};
  const auto cr = turnover_and_costs(ps, costs);
  for (std::size_t m = 1; m < cr.gross.size(); ++m) {
    EXPECT_NEAR(cr.turnover_long[m], 0.0, 1e-15);
    EXPECT_EQ(cr.net[0][m], cr.gross[m]);
  }
}

TEST(Sharpe, LagZeroMatchesMertens) {
  Rng rng(7);
  std::gamma_distribution<double> g(2.0, 1.0);
  std::vector<double> r(500);
  for (auto& v : r) v = 0.01 * (g(rng) - 1.5);
  const auto est = sharpe_nw(r, 0);
  const double n = static_cast<double>(r.size());
  double mu = 0;
  for (double v : r) mu += v;
  mu /= n;
  double m2 = 0, m3 = 0, m4 = 0;
  for (double v : r) {
    m2 += std::pow(v - mu, 2) / n;
    m3 += std::pow(v - mu, 3) / n;
    m4 += std::pow(v - mu, 4) / n;
  }
  const double sr = mu / std::sqrt(m2);
  const double skew = m3 / std::pow(m2, 1.5), kurt = m4 / (m2 * m2);
  const double var = (1.0 + 0.5 * sr * sr - skew * sr + (kurt - 3.0) / 4.0 * sr * sr) / n;
  EXPECT_NEAR(est.se, std::sqrt(var), 1e-12);
}

TEST(Sharpe, PopulationRatio) {
  Rng rng(8);
  std::normal_distribution<double> z(0.001, 0.01);
  std::vector<double> r(100000);
  for (auto& v : r) v = z(rng);
  const auto est = sharpe_nw(r);
  EXPECT_NEAR(est.sharpe, 0.10, 0.01);
  EXPECT_NEAR(est.annualized(), est.sharpe * std::sqrt(12.0), 1e-15);
  const std::vector<double> shortr{0.1, 0.2};
  EXPECT_EQ(kind_of([&] { sharpe_nw(shortr); }), ErrorKind::SeriesTooShort);
}
