#pragma once

// Monthly time-series primitives: AR(1) shock construction, cumulation and
// sign splitting. Everything here is a pure function of its inputs.

#include <algorithm>
#include <fstream>
#include <cmath>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sentfeed/detail/csv.hpp"
#include "sentfeed/detail/hac.hpp"
#include "sentfeed/detail/stats.hpp"
#include "sentfeed/error.hpp"
#include "sentfeed/format.hpp"
#include "sentfeed/month.hpp"

namespace sentfeed {

// Contiguous month-indexed vector. Gaps cannot be represented, so a valid
// MonthlySeries is gap-free by construction.
class MonthlySeries {
 public:
  MonthlySeries() = default;

  MonthlySeries(YearMonth start, std::vector<double> values) : start_(start), values_(std::move(values)) {
    require(!values_.empty(), ErrorKind::SeriesTooShort, "monthly series must have at least one value");
    for (std::size_t i = 0; i < values_.size(); ++i)
      require(std::isfinite(values_[i]), ErrorKind::SchemaViolation,
              "non-finite value at " + month_at(i).str());
  }

  // Builds a series from (month, value) pairs that must be strictly
  // increasing and gap-free.
  static MonthlySeries from_pairs(const std::vector<std::pair<YearMonth, double>>& pairs) {
    require(!pairs.empty(), ErrorKind::SeriesTooShort, "no observations");
    std::vector<double> values;
    values.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (i > 0) {
        const int step = pairs[i].first - pairs[i - 1].first;
        require(step > 0, ErrorKind::NonMonotoneDates,
                "month " + pairs[i].first.str() + " does not follow " + pairs[i - 1].first.str());
        require(step == 1, ErrorKind::MissingMonth,
                "gap between " + pairs[i - 1].first.str() + " and " + pairs[i].first.str());
      }
      values.push_back(pairs[i].second);
    }
    return MonthlySeries(pairs.front().first, std::move(values));
  }

  YearMonth start() const { return start_; }
  YearMonth last() const { return start_ + static_cast<int>(values_.size()) - 1; }
  YearMonth month_at(std::size_t i) const { return start_ + static_cast<int>(i); }
  std::size_t size() const { return values_.size(); }
  const std::vector<double>& values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::optional<std::size_t> index_of(YearMonth m) const {
    const int d = m - start_;
    if (d < 0 || d >= static_cast<int>(values_.size())) return std::nullopt;
    return static_cast<std::size_t>(d);
  }

  MonthlySeries slice(std::size_t first, std::size_t count) const {
    return MonthlySeries(month_at(first),
                         std::vector<double>(values_.begin() + static_cast<std::ptrdiff_t>(first),
                                             values_.begin() + static_cast<std::ptrdiff_t>(first + count)));
  }

 private:
  YearMonth start_{};
  std::vector<double> values_;
};

struct Ar1Fit {
  double alpha = 0.0;
  double phi = 0.0;
  double sigma_u = 0.0;
  MonthlySeries residuals;
  double se_alpha = 0.0;
  double se_phi = 0.0;
  double se_sigma = 0.0;
  double mean_removed = 0.0;
  int hac_lag = 12;
};

// Standardized innovations; the sample variance is one.
// Convention: the shock dated month t is the innovation observed at the end
// of t, so it first moves the return of month t + 1.
class ShockSeries {
 public:
  ShockSeries() = default;

  ShockSeries(YearMonth start, std::vector<double> eps, bool flipped = false)
      : start_(start), eps_(std::move(eps)), flipped_(flipped) {
    require(eps_.size() >= 2, ErrorKind::SeriesTooShort, "shock series needs at least two values");
    for (double v : eps_) require(std::isfinite(v), ErrorKind::SchemaViolation, "non-finite shock");
    const double var = stats::variance(eps_);
    require(std::abs(var - 1.0) <= 1e-9, ErrorKind::DegenerateSeries,
            "shock series must have unit sample variance, got " + format_double(var));
  }

  // Rescales raw innovations to unit sample variance (no demeaning) and
  // applies the sign flip.
  static ShockSeries standardized(YearMonth start, std::vector<double> raw, bool flipped = false) {
    require(raw.size() >= 2, ErrorKind::SeriesTooShort, "shock series needs at least two values");
    const double sd = stats::stddev(raw);
    require(sd > 0.0 && std::isfinite(sd), ErrorKind::DegenerateSeries, "innovations have zero variance");
    const double scale = (flipped ? -1.0 : 1.0) / sd;
    for (auto& v : raw) v *= scale;
    return ShockSeries(start, std::move(raw), flipped);
  }

  YearMonth start() const { return start_; }
  YearMonth month_at(std::size_t i) const { return start_ + static_cast<int>(i); }
  YearMonth last() const { return start_ + static_cast<int>(eps_.size()) - 1; }
  std::size_t size() const { return eps_.size(); }
  const std::vector<double>& eps() const { return eps_; }
  double operator[](std::size_t i) const { return eps_[i]; }
  bool flipped() const { return flipped_; }

  std::optional<std::size_t> index_of(YearMonth m) const {
    const int d = m - start_;
    if (d < 0 || d >= static_cast<int>(eps_.size())) return std::nullopt;
    return static_cast<std::size_t>(d);
  }

 private:
  YearMonth start_{};
  std::vector<double> eps_;
  bool flipped_ = false;
};

struct Ar1Options {
  bool demean = true;
  int hac_lag = 12;
};

// OLS fit of S_t = alpha + phi S_{t-1} + u_t with Newey-West standard errors.
inline Ar1Fit estimate_ar1(const MonthlySeries& series, const Ar1Options& opt = {}) {
  const std::size_t n = series.size();
  require(n >= 24, ErrorKind::SeriesTooShort, "AR(1) estimation needs >= 24 months, got " + std::to_string(n));
  const double var = stats::variance(series.values());
  require(var > 0.0, ErrorKind::DegenerateSeries, "series has zero variance");

  const double center = opt.demean ? stats::mean(series.values()) : 0.0;
  const std::size_t m = n - 1;
  Eigen::MatrixXd X(m, 2);
  Eigen::VectorXd y(m);
  for (std::size_t t = 1; t < n; ++t) {
    X(t - 1, 0) = 1.0;
    X(t - 1, 1) = series[t - 1] - center;
    y(t - 1) = series[t] - center;
  }
  const Eigen::Matrix2d xtx = X.transpose() * X;
  Eigen::FullPivLU<Eigen::Matrix2d> lu(xtx);
  require(lu.isInvertible() && (X.col(1).array() - X.col(1).mean()).abs().maxCoeff() > 0.0,
          ErrorKind::DegenerateSeries, "lagged series has no variation");
  const Eigen::Vector2d beta = lu.solve(X.transpose() * y);
  Eigen::VectorXd u = y - X * beta;
  // Intercept guarantees zero-mean residuals up to rounding; remove the rest.
  u.array() -= u.mean();

  const Eigen::Matrix2d bread = lu.inverse();
  Eigen::MatrixXd scores = X.array().colwise() * u.array();
  const Eigen::Matrix2d cov = bread * detail::bartlett_long_run(scores, opt.hac_lag) * bread;

  Ar1Fit fit;
  fit.alpha = beta(0);
  fit.phi = beta(1);
  fit.sigma_u = std::sqrt(u.squaredNorm() / static_cast<double>(m - 2));
  fit.residuals = MonthlySeries(series.start() + 1, std::vector<double>(u.data(), u.data() + u.size()));
  fit.se_alpha = std::sqrt(std::max(0.0, cov(0, 0)));
  fit.se_phi = std::sqrt(std::max(0.0, cov(1, 1)));
  // Delta method on sigma^2 = E[u^2].
  const double s2 = u.squaredNorm() / static_cast<double>(m);
  Eigen::MatrixXd v(m, 1);
  v.col(0) = u.array().square() - s2;
  const double var_s2 = detail::bartlett_long_run(v, opt.hac_lag)(0, 0) / (static_cast<double>(m) * m);
  fit.se_sigma = std::sqrt(std::max(0.0, var_s2)) / (2.0 * std::sqrt(s2));
  fit.mean_removed = center;
  fit.hac_lag = opt.hac_lag;
  return fit;
}

// eps_t = u_t / sd(u), sd with denominator n - 1.
inline ShockSeries standardize_shocks(const Ar1Fit& fit, bool flipped = false) {
  const auto& u = fit.residuals.values();
  require(u.size() >= 2 && stats::stddev(u) > 0.0, ErrorKind::DegenerateSeries, "residuals have zero variance");
  return ShockSeries::standardized(fit.residuals.start(), u, flipped);
}

// Value at t is r_{t+1} + ... + r_{t+h}; output keeps the input start month.
inline MonthlySeries cumulative_returns(const MonthlySeries& returns, int h) {
  require(h >= 1, ErrorKind::HorizonTooLong, "horizon must be >= 1");
  require(returns.size() > static_cast<std::size_t>(h), ErrorKind::HorizonTooLong,
          "horizon " + std::to_string(h) + " needs more than " + std::to_string(h) + " returns");
  const std::size_t n = returns.size() - static_cast<std::size_t>(h);
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    double acc = returns[t + 1];
    for (int j = 2; j <= h; ++j) acc += returns[t + static_cast<std::size_t>(j)];
    out[t] = acc;
  }
  return MonthlySeries(returns.start(), std::move(out));
}

struct SignSplit {
  std::vector<double> positive;
  std::vector<double> negative;
};

inline SignSplit split_sign(std::span<const double> eps) {
  SignSplit out;
  out.positive.reserve(eps.size());
  out.negative.reserve(eps.size());
  for (double e : eps) {
    out.positive.push_back(std::max(e, 0.0));
    out.negative.push_back(std::min(e, 0.0));
  }
  return out;
}

inline SignSplit split_sign(const ShockSeries& shocks) { return split_sign(std::span<const double>(shocks.eps())); }

// ---- `month,value` CSV files ----

inline MonthlySeries parse_monthly_csv(std::istream& in, const std::string& source = "<stream>") {
  const auto table = csv::parse(in, source);
  const int mcol = table.column("month");
  const int vcol = table.column("value");
  require(mcol >= 0 && vcol >= 0 && table.header.size() == 2, ErrorKind::SchemaViolation,
          source + ": expected header 'month,value'");
  std::vector<std::pair<YearMonth, double>> pairs;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const std::string where = source + ":" + std::to_string(table.line_numbers[r]);
    const auto& row = table.rows[r];
    YearMonth month;
    try {
      month = YearMonth::parse(row[static_cast<std::size_t>(mcol)]);
    } catch (const Error& e) {
      fail(ErrorKind::SchemaViolation, where + ": " + e.what());
    }
    const double v = csv::parse_double(row[static_cast<std::size_t>(vcol)], where);
    require(std::isfinite(v), ErrorKind::SchemaViolation, where + ": non-finite value");
    pairs.emplace_back(month, v);
  }
  return MonthlySeries::from_pairs(pairs);
}

inline MonthlySeries read_monthly_csv(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::SchemaViolation, "cannot open '" + path + "'");
  return parse_monthly_csv(in, path);
}

inline void write_monthly_csv(std::ostream& out, YearMonth start, std::span<const double> values) {
  out << "month,value\n";
  for (std::size_t i = 0; i < values.size(); ++i)
    out << (start + static_cast<int>(i)).str() << ',' << format_double(values[i], 17) << '\n';
}

inline void write_monthly_csv(std::ostream& out, const MonthlySeries& s) {
  write_monthly_csv(out, s.start(), s.values());
}

}  // namespace sentfeed
