#pragma once

// Quantile sorts with reference-universe breakpoints, EW/VW bucket returns,
// long-short spreads, turnover, costs and HAC Sharpe ratios.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "sentfeed/detail/hac.hpp"
#include "sentfeed/detail/stats.hpp"
#include "sentfeed/error.hpp"
#include "sentfeed/format.hpp"
#include "sentfeed/month.hpp"
#include "sentfeed/panel.hpp"

namespace sentfeed {

enum class Weighting { Equal, Value };

constexpr std::string_view to_string(Weighting w) { return w == Weighting::Equal ? "equal" : "value"; }

inline Weighting parse_weighting(std::string_view s) {
  if (s == "equal" || s == "ew") return Weighting::Equal;
  if (s == "value" || s == "vw") return Weighting::Value;
  fail(ErrorKind::InvalidArgument, "unknown weighting '" + std::string(s) + "'");
}

struct SortConfig {
  std::string signal = "signal";
  int n_buckets = 10;
  std::optional<std::string> universe;  // 0/1 column; breakpoints use flagged rows
  Weighting weighting = Weighting::Equal;
  bool skip_month = true;  // signal at t, return at t + 1
  std::vector<double> cost_bps_oneway{0.0, 5.0, 10.0};
  std::string delisting_column = "dlret";

  void validate() const {
    require(n_buckets >= 2, ErrorKind::InvalidArgument, "n_buckets must be >= 2");
    for (double c : cost_bps_oneway) require(c >= 0.0, ErrorKind::InvalidArgument, "costs must be >= 0");
  }
};

struct Breakpoints {
  std::vector<double> cutoffs;  // B_1 .. B_{n-1}; B_0 = -inf and B_n = +inf implicit
  bool degenerate = false;      // repeated cutoffs collapse buckets

  // Bucket q (0-based) holds z in (B_q, B_{q+1}].
  int bucket_of(double z) const {
    return static_cast<int>(std::lower_bound(cutoffs.begin(), cutoffs.end(), z) - cutoffs.begin());
  }
};

inline Breakpoints compute_breakpoints(std::span<const double> universe_signal, int n_buckets) {
  require(n_buckets >= 2, ErrorKind::InvalidArgument, "n_buckets must be >= 2");
  require(universe_signal.size() >= static_cast<std::size_t>(n_buckets), ErrorKind::TooFewInUniverse,
          std::to_string(universe_signal.size()) + " breakpoint observations for " + std::to_string(n_buckets) +
              " buckets");
  std::vector<double> sorted(universe_signal.begin(), universe_signal.end());
  std::sort(sorted.begin(), sorted.end());
  Breakpoints bp;
  for (int q = 1; q < n_buckets; ++q)
    bp.cutoffs.push_back(stats::quantile_sorted(sorted, static_cast<double>(q) / n_buckets));
  bp.degenerate = std::adjacent_find(bp.cutoffs.begin(), bp.cutoffs.end()) != bp.cutoffs.end();
  return bp;
}

// Breakpoints from the flagged subset of a month slice.
inline Breakpoints compute_breakpoints(std::span<const double> signal, std::span<const bool> universe, int n_buckets) {
  require(signal.size() == universe.size(), ErrorKind::MisalignedIndex, "signal and universe flags must align");
  std::vector<double> sub;
  for (std::size_t i = 0; i < signal.size(); ++i)
    if (universe[i]) sub.push_back(signal[i]);
  return compute_breakpoints(sub, n_buckets);
}

struct MonthMembership {
  YearMonth formation;
  YearMonth holding;
  std::vector<std::size_t> rows;  // panel rows at formation
  std::vector<int> bucket;        // 0-based, aligned with rows
  Breakpoints breakpoints;
};

struct Memberships {
  std::vector<MonthMembership> months;
  int n_buckets = 10;
  int degenerate_months = 0;
  std::size_t missing_signal_rows = 0;  // non-finite signals left unsorted
};

// Month-by-month sort; rows with a non-finite signal are not eligible.
inline Memberships form_portfolios(const FirmMonthPanel& panel, const SortConfig& cfg) {
  cfg.validate();
  require(panel.has_column(cfg.signal), ErrorKind::MissingSignal, "panel has no signal column '" + cfg.signal + "'");
  const auto& z = panel.column(cfg.signal);
  const std::vector<double>* flag = nullptr;
  if (cfg.universe) {
    require(panel.has_column(*cfg.universe), ErrorKind::MissingColumn, "panel has no universe column '" + *cfg.universe + "'");
    flag = &panel.column(*cfg.universe);
  }
  std::map<int, std::vector<std::size_t>> by_month;
  Memberships out;
  out.n_buckets = cfg.n_buckets;
  for (std::size_t i = 0; i < panel.size(); ++i) {
    if (!std::isfinite(z[i])) {
      ++out.missing_signal_rows;
      continue;
    }
    by_month[panel.month[i].serial()].push_back(i);
  }
  require(!by_month.empty(), ErrorKind::MissingSignal, "no month has a finite signal");
  for (const auto& [serial, rows] : by_month) {
    std::vector<double> uni;
    for (auto i : rows)
      if (!flag || (*flag)[i] != 0.0) uni.push_back(z[i]);
    MonthMembership m;
    m.formation = YearMonth::from_serial(serial);
    m.holding = m.formation + (cfg.skip_month ? 1 : 0);
    m.breakpoints = compute_breakpoints(uni, cfg.n_buckets);
    if (m.breakpoints.degenerate) ++out.degenerate_months;
    m.rows = rows;
    for (auto i : rows) m.bucket.push_back(m.breakpoints.bucket_of(z[i]));
    out.months.push_back(std::move(m));
  }
  return out;
}

struct Holding {
  std::string firm;
  double weight = 0.0;  // sums to one within the bucket
  double ret = 0.0;     // realized holding-month return
};

struct PortfolioSeries {
  std::vector<YearMonth> months;  // holding months
  int n_buckets = 10;
  std::vector<std::vector<double>> bucket_ret;  // [month][bucket], NaN when empty
  std::vector<std::vector<int>> counts;
  std::vector<std::vector<std::vector<Holding>>> holdings;  // [month][bucket]
  std::vector<double> ls;  // top minus bottom, NaN when skipped
  std::vector<bool> ls_valid;
  int skipped_months = 0;       // an end bucket was empty
  std::size_t dropped_exits = 0;  // firms absent at t+1 without a delisting return
  std::size_t delisting_used = 0;

  std::vector<double> ls_values() const {
    std::vector<double> v;
    for (std::size_t m = 0; m < ls.size(); ++m)
      if (ls_valid[m]) v.push_back(ls[m]);
    return v;
  }
};

inline PortfolioSeries portfolio_returns(const Memberships& mem, const FirmMonthPanel& panel, Weighting weighting,
                                         const std::string& delisting_column = "dlret") {
  const auto idx = panel.row_index();
  const std::vector<double>* dl = panel.has_column(delisting_column) ? &panel.column(delisting_column) : nullptr;
  PortfolioSeries out;
  out.n_buckets = mem.n_buckets;
  const auto nb = static_cast<std::size_t>(mem.n_buckets);
  for (const auto& m : mem.months) {
    std::vector<std::vector<Holding>> buckets(nb);
    std::vector<std::vector<double>> raw_w(nb);
    for (std::size_t k = 0; k < m.rows.size(); ++k) {
      const auto i = m.rows[k];
      double r = 0.0;
      auto it = idx.find({panel.firm_id[i], m.holding.serial()});
      if (it != idx.end()) {
        r = panel.ret[it->second];
      } else if (dl && std::isfinite((*dl)[i])) {
        r = (*dl)[i];
        ++out.delisting_used;
      } else {
        ++out.dropped_exits;
        continue;
      }
      const auto q = static_cast<std::size_t>(m.bucket[k]);
      buckets[q].push_back({panel.firm_id[i], 0.0, r});
      raw_w[q].push_back(weighting == Weighting::Equal ? 1.0 : panel.me[i]);
    }
    std::vector<double> rets(nb, std::numeric_limits<double>::quiet_NaN());
    std::vector<int> counts(nb, 0);
    for (std::size_t q = 0; q < nb; ++q) {
      counts[q] = static_cast<int>(buckets[q].size());
      if (buckets[q].empty()) continue;
      double total = 0.0;
      for (double w : raw_w[q]) total += w;
      require(total > 0.0, ErrorKind::InvalidArgument, "bucket weights sum to zero in " + m.formation.str());
      double r = 0.0;
      for (std::size_t j = 0; j < buckets[q].size(); ++j) {
        buckets[q][j].weight = raw_w[q][j] / total;
        r += buckets[q][j].weight * buckets[q][j].ret;
      }
      rets[q] = r;
    }
    const bool ok = counts.front() > 0 && counts.back() > 0;
    out.months.push_back(m.holding);
    out.ls.push_back(ok ? rets.back() - rets.front() : std::numeric_limits<double>::quiet_NaN());
    out.ls_valid.push_back(ok);
    if (!ok) ++out.skipped_months;
    out.bucket_ret.push_back(std::move(rets));
    out.counts.push_back(std::move(counts));
    out.holdings.push_back(std::move(buckets));
  }
  return out;
}

struct CostResult {
  std::vector<YearMonth> months;  // valid long-short months
  std::vector<double> gross;
  std::vector<double> turnover_long;   // one-way, fraction
  std::vector<double> turnover_short;
  std::vector<double> cost_bps;
  std::vector<std::vector<double>> net;  // [cost][month]
  std::vector<bool> uncharged;           // no prior position to trade from
};

namespace detail {

// One-way turnover 1/2 sum |w_t - w_{t-1} drifted| over the union of names.
inline double leg_turnover(const std::vector<Holding>& now, const std::vector<Holding>& prev) {
  std::map<std::string, double> diff;
  double grow = 0.0;
  for (const auto& h : prev) grow += h.weight * (1.0 + h.ret);
  for (const auto& h : prev) diff[h.firm] -= grow != 0.0 ? h.weight * (1.0 + h.ret) / grow : 0.0;
  for (const auto& h : now) diff[h.firm] += h.weight;
  double s = 0.0;
  for (const auto& [firm, d] : diff) s += std::abs(d);
  return 0.5 * s;
}

}  // namespace detail

// Net LS return = gross - cost * (turnover_long + turnover_short). The first
// month, and the first month after a skipped one, is left uncharged.
inline CostResult turnover_and_costs(const PortfolioSeries& ps, std::span<const double> cost_bps) {
  for (double c : cost_bps) require(c >= 0.0, ErrorKind::InvalidArgument, "costs must be >= 0");
  CostResult out;
  out.cost_bps.assign(cost_bps.begin(), cost_bps.end());
  out.net.assign(cost_bps.size(), {});
  const auto top = static_cast<std::size_t>(ps.n_buckets - 1);
  for (std::size_t m = 0; m < ps.months.size(); ++m) {
    if (!ps.ls_valid[m]) continue;
    const bool prior = m > 0 && ps.ls_valid[m - 1] && ps.months[m] - ps.months[m - 1] == 1;
    double tl = 0.0, ts = 0.0;
    if (prior) {
      tl = detail::leg_turnover(ps.holdings[m][top], ps.holdings[m - 1][top]);
      ts = detail::leg_turnover(ps.holdings[m][0], ps.holdings[m - 1][0]);
    }
    out.months.push_back(ps.months[m]);
    out.gross.push_back(ps.ls[m]);
    out.turnover_long.push_back(tl);
    out.turnover_short.push_back(ts);
    out.uncharged.push_back(!prior);
    for (std::size_t c = 0; c < cost_bps.size(); ++c) out.net[c].push_back(ps.ls[m] - cost_bps[c] * 1e-4 * (tl + ts));
  }
  return out;
}

struct SharpeEstimate {
  double sharpe = 0.0;  // monthly
  double se = 0.0;
  int lag = 12;

  double annualized() const { return sharpe * std::sqrt(12.0); }
};

// Sharpe = mean / sd; SE by the delta method on (mean, variance) with a
// Bartlett HAC covariance of the moment scores.
inline SharpeEstimate sharpe_nw(std::span<const double> r, int lag = 12) {
  require(lag >= 0, ErrorKind::LagNegative, "HAC lag must be >= 0");
  require(r.size() > static_cast<std::size_t>(lag) + 2, ErrorKind::SeriesTooShort,
          "Sharpe ratio needs more than lag + 2 observations");
  const auto T = static_cast<Eigen::Index>(r.size());
  const double mu = stats::mean(r);
  const double sd = stats::stddev(r);
  require(sd > 0.0, ErrorKind::DegenerateSeries, "series has zero variance");
  double s2 = 0.0;
  for (double v : r) s2 += (v - mu) * (v - mu);
  s2 /= static_cast<double>(T);
  Eigen::MatrixXd scores(T, 2);
  for (Eigen::Index t = 0; t < T; ++t) {
    const double d = r[static_cast<std::size_t>(t)] - mu;
    scores(t, 0) = d;
    scores(t, 1) = d * d - s2;
  }
  const Eigen::Matrix2d omega = detail::bartlett_long_run(scores, lag) / static_cast<double>(T);
  const double sig = std::sqrt(s2);
  const Eigen::Vector2d grad(1.0 / sig, -mu / (2.0 * s2 * sig));
  SharpeEstimate out;
  out.sharpe = mu / sd;
  out.se = std::sqrt(std::max(0.0, grad.dot(omega * grad) / static_cast<double>(T)));
  out.lag = lag;
  return out;
}

struct PerformanceSummary {
  double mean = 0.0;
  double vol = 0.0;
  SharpeEstimate sharpe;
  std::vector<double> cost_bps;
  std::vector<SharpeEstimate> net_sharpe;
  double avg_turnover_long = 0.0;
  double avg_turnover_short = 0.0;
  std::size_t months = 0;
};

inline PerformanceSummary summarize(const CostResult& cr, int lag = 12) {
  PerformanceSummary s;
  s.months = cr.gross.size();
  s.mean = stats::mean(cr.gross);
  s.vol = stats::stddev(cr.gross);
  s.sharpe = sharpe_nw(cr.gross, lag);
  s.cost_bps = cr.cost_bps;
  for (const auto& net : cr.net) s.net_sharpe.push_back(sharpe_nw(net, lag));
  s.avg_turnover_long = stats::mean(cr.turnover_long);
  s.avg_turnover_short = stats::mean(cr.turnover_short);
  return s;
}

// ---- output tables ----

inline void write_bucket_csv(std::ostream& out, const PortfolioSeries& ps) {
  out << "month,bucket,ret,count\n";
  for (std::size_t m = 0; m < ps.months.size(); ++m)
    for (std::size_t q = 0; q < ps.bucket_ret[m].size(); ++q)
      out << ps.months[m].str() << ',' << q + 1 << ',' << format_double(ps.bucket_ret[m][q], 12) << ','
          << ps.counts[m][q] << '\n';
}

inline std::string cost_label(double bps) { return "ls_net_" + format_double(bps, 6) + "bps"; }

// month,ls_gross,ls_net_<c>bps...,turnover_long,turnover_short
inline void write_long_short_csv(std::ostream& out, const CostResult& cr) {
  out << "month,ls_gross";
  for (double c : cr.cost_bps)
    if (c > 0.0) out << ',' << cost_label(c);
  out << ",turnover_long,turnover_short\n";
  for (std::size_t m = 0; m < cr.months.size(); ++m) {
    out << cr.months[m].str() << ',' << format_double(cr.gross[m], 12);
    for (std::size_t c = 0; c < cr.cost_bps.size(); ++c)
      if (cr.cost_bps[c] > 0.0) out << ',' << format_double(cr.net[c][m], 12);
    out << ',' << format_double(cr.turnover_long[m], 12) << ',' << format_double(cr.turnover_short[m], 12) << '\n';
  }
}

inline void write_performance_csv(std::ostream& out, const PerformanceSummary& s) {
  out << "metric,value\n";
  out << "months," << s.months << '\n';
  out << "mean," << format_double(s.mean, 10) << '\n';
  out << "vol," << format_double(s.vol, 10) << '\n';
  out << "sharpe_monthly," << format_double(s.sharpe.sharpe, 10) << '\n';
  out << "sharpe_se," << format_double(s.sharpe.se, 10) << '\n';
  out << "sharpe_annualized," << format_double(s.sharpe.annualized(), 10) << '\n';
  for (std::size_t c = 0; c < s.cost_bps.size(); ++c)
    out << "net_sharpe_" << format_double(s.cost_bps[c], 6) << "bps," << format_double(s.net_sharpe[c].sharpe, 10) << '\n';
  out << "turnover_long," << format_double(s.avg_turnover_long, 10) << '\n';
  out << "turnover_short," << format_double(s.avg_turnover_short, 10) << '\n';
}

}  // namespace sentfeed
