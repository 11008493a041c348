#pragma once

// Firm x month fixed-effects regressions with shock/regime interactions and
// one- or two-way clustered covariance.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sentfeed/core_series.hpp"
#include "sentfeed/detail/csv.hpp"
#include "sentfeed/detail/rng.hpp"
#include "sentfeed/detail/stats.hpp"
#include "sentfeed/error.hpp"
#include "sentfeed/format.hpp"
#include "sentfeed/month.hpp"

namespace sentfeed {

// Long-format table. Named numeric columns beyond the fixed schema (controls,
// regime tags) live in `extra`.
struct FirmMonthPanel {
  std::vector<std::string> firm_id;
  std::vector<YearMonth> month;
  std::vector<double> ret;
  std::vector<double> breadth;
  std::vector<double> retail;
  std::vector<double> optionable;
  std::vector<double> me;
  std::vector<double> vix;
  std::map<std::string, std::vector<double>> extra;

  std::size_t size() const { return firm_id.size(); }

  bool has_column(const std::string& name) const {
    static const std::set<std::string> fixed{"ret", "breadth", "retail", "optionable", "me", "vix"};
    return fixed.contains(name) || extra.contains(name);
  }

  const std::vector<double>& column(const std::string& name) const {
    if (name == "ret") return ret;
    if (name == "breadth") return breadth;
    if (name == "retail") return retail;
    if (name == "optionable") return optionable;
    if (name == "me") return me;
    if (name == "vix") return vix;
    auto it = extra.find(name);
    require(it != extra.end(), ErrorKind::MissingColumn, "panel has no column '" + name + "'");
    return it->second;
  }

  void push_row(std::string firm, YearMonth m, double r, double b, double rt, double opt, double mkt, double v) {
    firm_id.push_back(std::move(firm));
    month.push_back(m);
    ret.push_back(r);
    breadth.push_back(b);
    retail.push_back(rt);
    optionable.push_back(opt);
    me.push_back(mkt);
    vix.push_back(v);
  }

  void validate() const {
    const std::size_t n = size();
    for (const auto* col : {&ret, &breadth, &retail, &optionable, &me, &vix})
      require(col->size() == n, ErrorKind::SchemaViolation, "panel columns have unequal length");
    for (const auto& [name, col] : extra)
      require(col.size() == n, ErrorKind::SchemaViolation, "column '" + name + "' has wrong length");
    std::set<std::pair<std::string, int>> seen;
    for (std::size_t i = 0; i < n; ++i) {
      require(seen.emplace(firm_id[i], month[i].serial()).second, ErrorKind::SchemaViolation,
              "duplicate (firm, month) at row " + std::to_string(i + 1) + ": " + firm_id[i] + " " + month[i].str());
      require(std::isfinite(ret[i]), ErrorKind::SchemaViolation, "non-finite return at row " + std::to_string(i + 1));
    }
  }

  // (firm, month serial) -> row.
  std::map<std::pair<std::string, int>, std::size_t> row_index() const {
    std::map<std::pair<std::string, int>, std::size_t> idx;
    for (std::size_t i = 0; i < size(); ++i) idx.emplace(std::make_pair(firm_id[i], month[i].serial()), i);
    return idx;
  }
};

// ---------------------------------------------------------------------------
// Regime tags

struct RegimeOptions {
  double breadth_quantile = 1.0 / 3.0;  // low breadth: breadth <= q
  double retail_quantile = 2.0 / 3.0;   // high retail: retail > q
  double vix_quantile = 0.75;           // high VIX: vix > q over all months
  std::vector<std::pair<std::string, YearMonth>> post_dates;
};

// Adds low_breadth, high_retail (per-month cross-sectional cutoffs),
// high_vix (full-sample time-series cutoff), not_optionable and post_<name>.
inline FirmMonthPanel tag_regimes(const FirmMonthPanel& panel, const RegimeOptions& opt = {}) {
  panel.validate();
  FirmMonthPanel out = panel;
  const std::size_t n = panel.size();
  std::map<int, std::vector<std::size_t>> by_month;
  for (std::size_t i = 0; i < n; ++i) by_month[panel.month[i].serial()].push_back(i);

  std::vector<double> low_breadth(n, 0.0), high_retail(n, 0.0), high_vix(n, 0.0), not_opt(n, 0.0);
  std::vector<double> month_vix;
  for (const auto& [serial, rows] : by_month) {
    std::vector<double> b, r;
    for (auto i : rows) {
      b.push_back(panel.breadth[i]);
      r.push_back(panel.retail[i]);
    }
    const double bq = stats::quantile(b, opt.breadth_quantile);
    const double rq = stats::quantile(r, opt.retail_quantile);
    double v = 0.0;
    for (auto i : rows) {
      low_breadth[i] = panel.breadth[i] <= bq ? 1.0 : 0.0;
      high_retail[i] = panel.retail[i] > rq ? 1.0 : 0.0;
      v += panel.vix[i];
    }
    month_vix.push_back(v / static_cast<double>(rows.size()));
  }
  const double vq = stats::quantile(month_vix, opt.vix_quantile);
  std::size_t k = 0;
  for (const auto& [serial, rows] : by_month) {
    for (auto i : rows) high_vix[i] = month_vix[k] > vq ? 1.0 : 0.0;
    ++k;
  }
  for (std::size_t i = 0; i < n; ++i) not_opt[i] = panel.optionable[i] == 0.0 ? 1.0 : 0.0;
  out.extra["low_breadth"] = std::move(low_breadth);
  out.extra["high_retail"] = std::move(high_retail);
  out.extra["high_vix"] = std::move(high_vix);
  out.extra["not_optionable"] = std::move(not_opt);
  for (const auto& [name, date] : opt.post_dates) {
    std::vector<double> post(n);
    for (std::size_t i = 0; i < n; ++i) post[i] = panel.month[i] >= date ? 1.0 : 0.0;
    out.extra["post_" + name] = std::move(post);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Regression panels

// Prepared regression sample: dependent, regressors and dense firm/month
// indices. All resampling routines operate on this form.
struct RegressionPanel {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  std::vector<std::string> names;
  std::vector<bool> eps_term;  // coefficient reported in bps
  std::vector<int> firm;       // 0..n_firms-1
  std::vector<int> month;      // 0..n_months-1
  std::vector<YearMonth> calendar;  // calendar month per month index
  int n_firms = 0;
  int n_months = 0;
  std::size_t singletons_dropped = 0;
  std::vector<std::string> absorbed_terms;

  std::size_t rows() const { return static_cast<std::size_t>(y.size()); }

  // Keeps rows with keep[i] and re-indexes firms and months densely.
  RegressionPanel subset(const std::vector<bool>& keep) const {
    std::vector<std::size_t> sel;
    std::vector<int> months;
    for (std::size_t i = 0; i < rows(); ++i)
      if (keep[i]) {
        sel.push_back(i);
        months.push_back(month[i]);
      }
    return gather(sel, months);
  }

  // Output row r copies row sel[r] and is placed in month group
  // month_key[r]; resamplers use distinct keys for duplicated months.
  RegressionPanel gather(const std::vector<std::size_t>& sel, const std::vector<int>& month_key) const {
    RegressionPanel out;
    out.names = names;
    out.eps_term = eps_term;
    out.absorbed_terms = absorbed_terms;
    out.singletons_dropped = singletons_dropped;
    out.y.resize(static_cast<Eigen::Index>(sel.size()));
    out.X.resize(static_cast<Eigen::Index>(sel.size()), X.cols());
    std::map<int, int> fmap, mmap;
    for (std::size_t r = 0; r < sel.size(); ++r) {
      const auto i = sel[r];
      out.y(static_cast<Eigen::Index>(r)) = y(static_cast<Eigen::Index>(i));
      out.X.row(static_cast<Eigen::Index>(r)) = X.row(static_cast<Eigen::Index>(i));
      out.firm.push_back(fmap.emplace(firm[i], static_cast<int>(fmap.size())).first->second);
      auto [it, inserted] = mmap.emplace(month_key[r], static_cast<int>(mmap.size()));
      if (inserted && static_cast<std::size_t>(month[i]) < calendar.size())
        out.calendar.push_back(calendar[static_cast<std::size_t>(month[i])]);
      out.month.push_back(it->second);
    }
    out.n_firms = static_cast<int>(fmap.size());
    out.n_months = static_cast<int>(mmap.size());
    return out;
  }
};

struct FeSettings {
  bool firm_fe = true;
  bool month_fe = true;
  bool cluster_firm = true;
  bool cluster_month = true;
  double demean_tol = 1e-12;
  int max_demean_iter = 10000;
};

namespace detail {

struct GroupIndex {
  std::vector<int> id;
  int count = 0;
};

// Alternating projections onto the firm and month dummy spaces.
inline void within_transform(Eigen::MatrixXd& M, const GroupIndex* a, const GroupIndex* b, double tol, int max_iter) {
  if (M.size() == 0 || (!a && !b)) return;
  auto sweep = [&](const GroupIndex& g) {
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(g.count, M.cols());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(g.count);
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
      sums.row(g.id[static_cast<std::size_t>(i)]) += M.row(i);
      counts(g.id[static_cast<std::size_t>(i)]) += 1.0;
    }
    for (int k = 0; k < g.count; ++k)
      if (counts(k) > 0) sums.row(k) /= counts(k);
    double change = 0.0;
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
      const auto& mu = sums.row(g.id[static_cast<std::size_t>(i)]);
      change = std::max(change, mu.cwiseAbs().maxCoeff());
      M.row(i) -= mu;
    }
    return change;
  };
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  for (int it = 0; it < max_iter; ++it) {
    double change = 0.0;
    if (a) change = std::max(change, sweep(*a));
    if (b) change = std::max(change, sweep(*b));
    if (!(a && b) || change <= tol * scale) break;
  }
}

inline Eigen::MatrixXd cluster_meat(const Eigen::MatrixXd& scores, const std::vector<int>& cluster, int n_clusters) {
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(n_clusters, scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) sums.row(cluster[static_cast<std::size_t>(i)]) += scores.row(i);
  const double G = n_clusters;
  const double adj = G > 1 ? G / (G - 1.0) : 1.0;
  return adj * sums.transpose() * sums;
}

}  // namespace detail

// Within estimator with the demeaned design cached, so that repeated fits on
// new dependent vectors (bootstrap refits) only demean y.
class WithinEstimator {
 public:
  WithinEstimator(const RegressionPanel& panel, const FeSettings& fe) : fe_(fe), firm_{panel.firm, panel.n_firms}, month_{panel.month, panel.n_months} {
    require(panel.rows() > 0 && panel.X.cols() > 0, ErrorKind::SingularDesign, "empty regression panel");
    Xw_ = panel.X;
    detail::within_transform(Xw_, fe.firm_fe ? &firm_ : nullptr, fe.month_fe ? &month_ : nullptr, fe.demean_tol,
                             fe.max_demean_iter);
    for (Eigen::Index j = 0; j < Xw_.cols(); ++j) {
      const double raw = std::max(1.0, panel.X.col(j).cwiseAbs().maxCoeff());
      require(Xw_.col(j).cwiseAbs().maxCoeff() > 1e-9 * raw, ErrorKind::NoWithinVariation,
              "regressor '" + panel.names[static_cast<std::size_t>(j)] + "' has no variation within the fixed effects");
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xw_);
    require(qr.rank() == Xw_.cols() && Xw_.rows() > Xw_.cols(), ErrorKind::SingularDesign,
            "demeaned design is rank deficient");
    bread_ = (Xw_.transpose() * Xw_).inverse();
    if (fe_.cluster_firm && fe_.cluster_month) {
      std::map<std::pair<int, int>, int> cells;
      for (std::size_t i = 0; i < panel.rows(); ++i)
        inter_.id.push_back(cells.emplace(std::make_pair(panel.firm[i], panel.month[i]), static_cast<int>(cells.size())).first->second);
      inter_.count = static_cast<int>(cells.size());
    }
  }

  struct Result {
    Eigen::VectorXd coef;
    Eigen::MatrixXd cov;
    Eigen::VectorXd resid;
    double ssr = 0.0;
    bool repaired = false;
  };

  Result fit(const Eigen::VectorXd& y) const {
    Eigen::MatrixXd yw = y;
    detail::within_transform(yw, fe_.firm_fe ? &firm_ : nullptr, fe_.month_fe ? &month_ : nullptr, fe_.demean_tol,
                             fe_.max_demean_iter);
    Result r;
    r.coef = bread_ * (Xw_.transpose() * yw.col(0));
    r.resid = yw.col(0) - Xw_ * r.coef;
    r.ssr = r.resid.squaredNorm();
    const Eigen::MatrixXd scores = Xw_.array().colwise() * r.resid.array();
    Eigen::MatrixXd meat;
    if (fe_.cluster_firm && fe_.cluster_month) {
      meat = detail::cluster_meat(scores, firm_.id, firm_.count) + detail::cluster_meat(scores, month_.id, month_.count) -
             detail::cluster_meat(scores, inter_.id, inter_.count);
    } else if (fe_.cluster_firm) {
      meat = detail::cluster_meat(scores, firm_.id, firm_.count);
    } else if (fe_.cluster_month) {
      meat = detail::cluster_meat(scores, month_.id, month_.count);
    } else {
      meat = scores.transpose() * scores;
    }
    r.cov = bread_ * meat * bread_;
    r.cov = 0.5 * (r.cov + r.cov.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r.cov);
    if (es.eigenvalues().minCoeff() < 0.0) {
      r.repaired = true;
      r.cov = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).asDiagonal() * es.eigenvectors().transpose();
    }
    return r;
  }

  const Eigen::MatrixXd& demeaned_design() const { return Xw_; }

 private:
  FeSettings fe_;
  detail::GroupIndex firm_, month_, inter_;
  Eigen::MatrixXd Xw_;
  Eigen::MatrixXd bread_;
};

struct PanelFit {
  std::vector<std::string> names;
  std::vector<bool> eps_term;
  Eigen::VectorXd coef;  // units of the dependent variable
  Eigen::MatrixXd cov;
  std::size_t nobs = 0;
  double r2_within = 0.0;
  double adj_r2 = 0.0;
  int n_firm_fe = 0;
  int n_month_fe = 0;
  std::size_t singletons_dropped = 0;
  std::vector<std::string> absorbed_terms;
  bool cov_repaired = false;
  int horizon = 1;

  double se(std::size_t i) const { return std::sqrt(std::max(0.0, cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)))); }
  double t_stat(std::size_t i) const { return coef(static_cast<Eigen::Index>(i)) / se(i); }
  double p_value(std::size_t i) const { return stats::two_sided_p(t_stat(i)); }
  // Shock terms are reported in bps per one s.d. shock.
  double scale(std::size_t i) const { return eps_term[i] ? 1e4 : 1.0; }
  double coef_reported(std::size_t i) const { return coef(static_cast<Eigen::Index>(i)) * scale(i); }
  double se_reported(std::size_t i) const { return se(i) * scale(i); }

  std::optional<std::size_t> index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    return std::nullopt;
  }
};

// Drops singleton firms/months (under the corresponding FE) until none remain.
inline RegressionPanel drop_singletons(const RegressionPanel& p, const FeSettings& fe) {
  if (!fe.firm_fe && !fe.month_fe) return p;
  std::vector<bool> keep(p.rows(), true);
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<int> fc(static_cast<std::size_t>(p.n_firms), 0), mc(static_cast<std::size_t>(p.n_months), 0);
    for (std::size_t i = 0; i < p.rows(); ++i)
      if (keep[i]) {
        ++fc[static_cast<std::size_t>(p.firm[i])];
        ++mc[static_cast<std::size_t>(p.month[i])];
      }
    for (std::size_t i = 0; i < p.rows(); ++i) {
      if (!keep[i]) continue;
      if ((fe.firm_fe && fc[static_cast<std::size_t>(p.firm[i])] == 1) ||
          (fe.month_fe && mc[static_cast<std::size_t>(p.month[i])] == 1)) {
        keep[i] = false;
        changed = true;
      }
    }
  }
  const auto dropped = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), false));
  if (dropped == 0) return p;
  auto out = p.subset(keep);
  out.singletons_dropped = p.singletons_dropped + dropped;
  return out;
}

inline PanelFit fit_regression_panel(const RegressionPanel& raw, const FeSettings& fe = {}) {
  const RegressionPanel p = drop_singletons(raw, fe);
  require(p.n_firms >= 2 && p.n_months >= 2, ErrorKind::SingularDesign, "need at least 2 firms and 2 months");
  const WithinEstimator est(p, fe);
  const auto r = est.fit(p.y);
  PanelFit out;
  out.names = p.names;
  out.eps_term = p.eps_term;
  out.coef = r.coef;
  out.cov = r.cov;
  out.cov_repaired = r.repaired;
  out.nobs = p.rows();
  out.n_firm_fe = fe.firm_fe ? p.n_firms : 0;
  out.n_month_fe = fe.month_fe ? p.n_months : 0;
  out.singletons_dropped = p.singletons_dropped;
  out.absorbed_terms = p.absorbed_terms;
  Eigen::MatrixXd yw = p.y;
  detail::GroupIndex fi{p.firm, p.n_firms}, mi{p.month, p.n_months};
  detail::within_transform(yw, fe.firm_fe ? &fi : nullptr, fe.month_fe ? &mi : nullptr, fe.demean_tol, fe.max_demean_iter);
  const double sst_within = yw.squaredNorm();
  out.r2_within = sst_within > 0.0 ? 1.0 - r.ssr / sst_within : 0.0;
  const double N = static_cast<double>(p.rows());
  const double sst = (p.y.array() - p.y.mean()).square().sum();
  const double fe_params = (fe.firm_fe ? p.n_firms : 0) + (fe.month_fe ? p.n_months : 0) -
                           ((fe.firm_fe && fe.month_fe) ? 1 : 0) + ((fe.firm_fe || fe.month_fe) ? 0 : 1);
  const double dof = N - static_cast<double>(p.X.cols()) - fe_params;
  out.adj_r2 = (sst > 0.0 && dof > 0.0) ? 1.0 - (r.ssr / dof) / (sst / (N - 1.0)) : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// PanelSpec -> regression panel

// A product of factors. Factor names: eps, eps_pos, eps_neg (the month's
// shock), or any numeric panel column including regime tags.
struct PanelTerm {
  std::vector<std::string> factors;

  std::string name() const {
    std::string s;
    for (const auto& f : factors) s += (s.empty() ? "" : "*") + f;
    return s;
  }
  bool has_shock() const {
    return std::any_of(factors.begin(), factors.end(),
                       [](const std::string& f) { return f == "eps" || f == "eps_pos" || f == "eps_neg"; });
  }
};

// "eps_pos*low_breadth*high_vix" -> {eps_pos, low_breadth, high_vix}
inline PanelTerm parse_term(const std::string& text) {
  PanelTerm t;
  std::size_t pos = 0;
  for (;;) {
    const auto next = text.find('*', pos);
    auto f = csv::trim(text.substr(pos, next == std::string::npos ? std::string::npos : next - pos));
    require(!f.empty(), ErrorKind::InvalidArgument, "empty factor in term '" + text + "'");
    t.factors.push_back(std::move(f));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return t;
}

struct PanelSpec {
  int horizon = 1;
  std::vector<PanelTerm> terms;
  FeSettings fe;
};

namespace detail {

inline bool constant_within(const std::vector<double>& v, const std::vector<int>& group) {
  std::unordered_map<int, double> first;
  for (std::size_t i = 0; i < v.size(); ++i) {
    auto [it, inserted] = first.emplace(group[i], v[i]);
    if (!inserted && std::abs(it->second - v[i]) > 1e-14 * std::max(1.0, std::abs(v[i]))) return false;
  }
  return true;
}

}  // namespace detail

// Builds the regression sample for the h-month-ahead cumulative firm return
// sum_{j=1..h} ret_{i,t+j} on terms measured at month t. Terms constant
// within month (under month FE) or within firm (under firm FE) are absorbed.
inline RegressionPanel build_regression_panel(const FirmMonthPanel& panel, const ShockSeries& shocks,
                                              const PanelSpec& spec) {
  panel.validate();
  require(spec.horizon >= 1, ErrorKind::HorizonTooLong, "panel horizon must be >= 1");
  require(!spec.terms.empty(), ErrorKind::InvalidArgument, "panel spec has no regressors");
  const auto idx = panel.row_index();
  const auto split = split_sign(shocks);

  std::vector<std::size_t> rows;
  std::vector<double> ys;
  for (std::size_t i = 0; i < panel.size(); ++i) {
    if (!shocks.index_of(panel.month[i])) continue;
    double acc = 0.0;
    bool ok = true;
    for (int j = 1; j <= spec.horizon && ok; ++j) {
      auto it = idx.find({panel.firm_id[i], (panel.month[i] + j).serial()});
      if (it == idx.end()) ok = false;
      else acc += panel.ret[it->second];
    }
    if (!ok) continue;
    rows.push_back(i);
    ys.push_back(acc);
  }
  require(!rows.empty(), ErrorKind::HorizonTooLong,
          "no firm-month has " + std::to_string(spec.horizon) + " months of subsequent returns");

  RegressionPanel out;
  out.y = Eigen::Map<Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
  std::map<std::string, int> fmap;
  std::map<int, int> mmap;
  std::vector<int> msorted;
  for (auto i : rows) msorted.push_back(panel.month[i].serial());
  std::sort(msorted.begin(), msorted.end());
  msorted.erase(std::unique(msorted.begin(), msorted.end()), msorted.end());
  for (int s : msorted) {
    mmap.emplace(s, static_cast<int>(mmap.size()));
    out.calendar.push_back(YearMonth::from_serial(s));
  }
  for (auto i : rows) {
    out.firm.push_back(fmap.emplace(panel.firm_id[i], static_cast<int>(fmap.size())).first->second);
    out.month.push_back(mmap.at(panel.month[i].serial()));
  }
  out.n_firms = static_cast<int>(fmap.size());
  out.n_months = static_cast<int>(mmap.size());

  auto factor_value = [&](const std::string& f, std::size_t row) -> double {
    if (f == "eps" || f == "eps_pos" || f == "eps_neg") {
      const auto t = *shocks.index_of(panel.month[row]);
      return f == "eps" ? shocks[t] : (f == "eps_pos" ? split.positive[t] : split.negative[t]);
    }
    return panel.column(f)[row];
  };

  std::vector<std::vector<double>> cols;
  for (const auto& term : spec.terms) {
    for (const auto& f : term.factors)
      require(f == "eps" || f == "eps_pos" || f == "eps_neg" || panel.has_column(f), ErrorKind::MissingColumn,
              "panel has no column '" + f + "'");
    std::vector<double> v(rows.size(), 1.0);
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (const auto& f : term.factors) v[r] *= factor_value(f, rows[r]);
    if ((spec.fe.month_fe && detail::constant_within(v, out.month)) ||
        (spec.fe.firm_fe && detail::constant_within(v, out.firm))) {
      out.absorbed_terms.push_back(term.name());
      continue;
    }
    out.names.push_back(term.name());
    out.eps_term.push_back(term.has_shock());
    cols.push_back(std::move(v));
  }
  require(!cols.empty(), ErrorKind::NoWithinVariation, "every term is absorbed by the fixed effects");
  out.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c)
    out.X.col(static_cast<Eigen::Index>(c)) = Eigen::Map<Eigen::VectorXd>(cols[c].data(), static_cast<Eigen::Index>(rows.size()));
  return out;
}

inline PanelFit fit_panel_fe(const FirmMonthPanel& panel, const ShockSeries& shocks, const PanelSpec& spec) {
  auto fit = fit_regression_panel(build_regression_panel(panel, shocks, spec), spec.fe);
  fit.horizon = spec.horizon;
  return fit;
}

inline std::vector<PanelFit> panel_irf_by_horizon(const FirmMonthPanel& panel, const ShockSeries& shocks,
                                                  PanelSpec spec, std::span<const int> horizons) {
  std::vector<PanelFit> out;
  for (int h : horizons) {
    spec.horizon = h;
    out.push_back(fit_panel_fe(panel, shocks, spec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Panel CSV: firm_id,month,ret,breadth,retail,optionable,me,vix[,extra...]

struct PanelReadOptions {
  // Empty breadth fields are filled with the firm's latest reported value
  // (quarterly holdings carried to constituent months).
  bool forward_carry_breadth = false;
};

inline FirmMonthPanel parse_panel_csv(std::istream& in, const std::string& source = "<stream>",
                                      const PanelReadOptions& opt = {}) {
  const auto table = csv::parse(in, source);
  static const std::vector<std::string> required{"firm_id", "month", "ret", "breadth", "retail", "optionable", "me", "vix"};
  for (std::size_t i = 0; i < required.size(); ++i)
    require(table.header.size() > i && table.header[i] == required[i], ErrorKind::SchemaViolation,
            source + ": header must start with firm_id,month,ret,breadth,retail,optionable,me,vix");
  FirmMonthPanel p;
  for (std::size_t c = required.size(); c < table.header.size(); ++c) p.extra[table.header[c]];

  // Rows are sorted by (firm, month) before carrying breadth forward.
  std::vector<std::size_t> order(table.rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<YearMonth> months(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const std::string where = source + ":" + std::to_string(table.line_numbers[r]);
    try {
      months[r] = YearMonth::parse(table.rows[r][1]);
    } catch (const Error& e) {
      fail(ErrorKind::SchemaViolation, where + ": " + e.what());
    }
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(table.rows[a][0], months[a]) < std::tie(table.rows[b][0], months[b]);
  });

  std::set<std::pair<std::string, int>> seen;
  std::string carry_firm;
  std::optional<double> carry;
  for (auto r : order) {
    const auto& row = table.rows[r];
    const std::string where = source + ":" + std::to_string(table.line_numbers[r]);
    require(!row[0].empty(), ErrorKind::SchemaViolation, where + ": empty firm_id");
    require(seen.emplace(row[0], months[r].serial()).second, ErrorKind::SchemaViolation,
            where + ": duplicate (firm, month) row " + row[0] + " " + months[r].str());
    if (row[0] != carry_firm) {
      carry_firm = row[0];
      carry.reset();
    }
    double breadth = 0.0;
    if (row[3].empty() && opt.forward_carry_breadth) {
      require(carry.has_value(), ErrorKind::SchemaViolation, where + ": no earlier breadth value to carry");
      breadth = *carry;
    } else {
      breadth = csv::parse_double(row[3], where);
      carry = breadth;
    }
    const double ret = csv::parse_double(row[2], where);
    require(std::isfinite(ret), ErrorKind::SchemaViolation, where + ": non-finite return");
    p.push_row(row[0], months[r], ret, breadth, csv::parse_double(row[4], where), csv::parse_double(row[5], where),
               csv::parse_double(row[6], where), csv::parse_double(row[7], where));
    for (std::size_t c = required.size(); c < table.header.size(); ++c)
      p.extra[table.header[c]].push_back(csv::parse_double(row[c], where));
  }
  return p;
}

inline FirmMonthPanel read_panel_csv(const std::string& path, const PanelReadOptions& opt = {}) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::SchemaViolation, "cannot open '" + path + "'");
  return parse_panel_csv(in, path, opt);
}

inline void write_panel_csv(std::ostream& out, const FirmMonthPanel& p) {
  out << "firm_id,month,ret,breadth,retail,optionable,me,vix";
  for (const auto& [name, col] : p.extra) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < p.size(); ++i) {
    out << p.firm_id[i] << ',' << p.month[i].str() << ',' << format_double(p.ret[i], 17) << ','
        << format_double(p.breadth[i], 17) << ',' << format_double(p.retail[i], 17) << ','
        << format_double(p.optionable[i], 17) << ',' << format_double(p.me[i], 17) << ','
        << format_double(p.vix[i], 17);
    for (const auto& [name, col] : p.extra) out << ',' << format_double(col[i], 17);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Synthetic panels

struct PanelSimConfig {
  int n_firms = 100;
  int n_months = 120;
  YearMonth start{2000, 1};
  double kappa_bps = 10.0;            // loading of r_{i,t+1} on eps_t
  double low_breadth_multiplier = 2.0;  // loading multiplier for low-breadth firms
  double idio_sd = 0.02;
  double month_sd = 0.0;  // common month component (absorbed by month FE)
  double vix_mean = 20.0;
  double vix_sd = 6.0;
};

// Breadth is a persistent firm trait, so low-breadth status is mostly a firm
// property. Returns are r_{i,t+1} = load_{i,t} eps_t + common_t + idio, with
// load = kappa * multiplier for low-breadth firm-months. Shocks are dated
// start .. start + n_months - 2.
inline FirmMonthPanel simulate_firm_panel(const PanelSimConfig& cfg, const ShockSeries& shocks, std::uint64_t seed) {
  require(cfg.n_firms >= 3 && cfg.n_months >= 3, ErrorKind::InvalidArgument, "panel simulation too small");
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> firm_breadth(static_cast<std::size_t>(cfg.n_firms)), firm_retail(firm_breadth.size()),
      firm_opt(firm_breadth.size()), firm_me(firm_breadth.size());
  for (std::size_t i = 0; i < firm_breadth.size(); ++i) {
    firm_breadth[i] = 0.05 + 0.9 * u(rng);
    firm_retail[i] = u(rng);
    firm_opt[i] = u(rng) < 0.5 ? 1.0 : 0.0;
    firm_me[i] = std::exp(6.0 + 1.5 * z(rng));
  }
  std::vector<double> vix(static_cast<std::size_t>(cfg.n_months)), common(vix.size());
  double x = 0.0;
  for (auto& v : vix) {
    x = 0.8 * x + std::sqrt(1 - 0.64) * z(rng);
    v = std::max(5.0, cfg.vix_mean + cfg.vix_sd * x);
  }
  for (auto& c : common) c = cfg.month_sd * z(rng);

  FirmMonthPanel p;
  const std::size_t nf = firm_breadth.size();
  // Breadth ranks are fixed per firm; small monthly jitter keeps values distinct.
  std::vector<std::vector<double>> breadth(vix.size(), std::vector<double>(nf));
  std::vector<double> cutoff(vix.size());
  for (std::size_t t = 0; t < vix.size(); ++t) {
    for (std::size_t i = 0; i < nf; ++i) breadth[t][i] = std::clamp(firm_breadth[i] + 0.01 * z(rng), 0.0, 1.0);
    cutoff[t] = stats::quantile(breadth[t], 1.0 / 3.0);
  }
  for (std::size_t i = 0; i < nf; ++i) {
    const std::string id = "F" + std::to_string(1000 + i);
    for (std::size_t t = 0; t < vix.size(); ++t) {
      double r = cfg.idio_sd * z(rng) + common[t];
      if (t > 0) {
        const YearMonth prev = cfg.start + static_cast<int>(t) - 1;
        if (auto s = shocks.index_of(prev)) {
          const bool low = breadth[t - 1][i] <= cutoff[t - 1];
          r += (low ? cfg.low_breadth_multiplier : 1.0) * cfg.kappa_bps * 1e-4 * shocks[*s];
        }
      }
      p.push_row(id, cfg.start + static_cast<int>(t), r, breadth[t][i], firm_retail[i], firm_opt[i],
                 firm_me[i] * std::exp(0.05 * z(rng)), vix[t]);
    }
  }
  return p;
}

}  // namespace sentfeed
