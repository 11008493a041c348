#pragma once

// Reference implementations shared by the unit and acceptance tests.

#include <map>
#include <random>

#include <Eigen/Dense>

#include "sentfeed/panel.hpp"

namespace sentfeed::oracle {

struct DummyOls {
  Eigen::VectorXd coef;  // slopes only
  Eigen::MatrixXd cov_firm;
};

// Explicit dummy-variable regression: [X, firm dummies, month dummies less
// one]. Firm-clustered covariance via Frisch-Waugh residualized regressors.
inline DummyOls dummy_ols(const RegressionPanel& p) {
  const auto n = static_cast<Eigen::Index>(p.rows());
  const auto k = p.X.cols();
  Eigen::MatrixXd D(n, p.n_firms + p.n_months - 1);
  D.setZero();
  for (Eigen::Index i = 0; i < n; ++i) {
    D(i, p.firm[static_cast<std::size_t>(i)]) = 1.0;
    const int m = p.month[static_cast<std::size_t>(i)];
    if (m > 0) D(i, p.n_firms + m - 1) = 1.0;
  }
  Eigen::MatrixXd Z(n, k + D.cols());
  Z << p.X, D;
  const Eigen::VectorXd b = Z.colPivHouseholderQr().solve(p.y);
  const Eigen::VectorXd u = p.y - Z * b;
  const Eigen::MatrixXd Xt = p.X - D * D.colPivHouseholderQr().solve(p.X);
  const Eigen::MatrixXd bread = (Xt.transpose() * Xt).inverse();
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(p.n_firms, k);
  for (Eigen::Index i = 0; i < n; ++i) sums.row(p.firm[static_cast<std::size_t>(i)]) += Xt.row(i) * u(i);
  const double G = p.n_firms;
  return {b.head(k), bread * (G / (G - 1) * sums.transpose() * sums) * bread};
}

inline RegressionPanel random_panel(int n_firms, int n_months, int k, double keep, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RegressionPanel p;
  std::vector<double> ys;
  std::vector<std::vector<double>> xs;
  std::map<int, int> fm, mm;
  std::vector<int> fr, mr;
  for (int i = 0; i < n_firms; ++i)
    for (int t = 0; t < n_months; ++t) {
      if (u(rng) > keep) continue;
      std::vector<double> x(static_cast<std::size_t>(k));
      double y = 0.1 * i - 0.05 * t + z(rng);
      for (int j = 0; j < k; ++j) {
        x[static_cast<std::size_t>(j)] = z(rng) + 0.02 * i;
        y += (j + 1) * 0.5 * x[static_cast<std::size_t>(j)];
      }
      ys.push_back(y);
      xs.push_back(x);
      fr.push_back(i);
      mr.push_back(t);
    }
  p.y = Eigen::Map<Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
  p.X.resize(static_cast<Eigen::Index>(ys.size()), k);
  for (std::size_t r = 0; r < xs.size(); ++r)
    for (int j = 0; j < k; ++j) p.X(static_cast<Eigen::Index>(r), j) = xs[r][static_cast<std::size_t>(j)];
  for (int j = 0; j < k; ++j) {
    p.names.push_back("x" + std::to_string(j));
    p.eps_term.push_back(false);
  }
  // Dense re-indexing of whatever firms/months survived.
  for (int f : fr) fm.emplace(f, 0);
  for (int m : mr) mm.emplace(m, 0);
  int c = 0;
  for (auto& [key, v] : fm) v = c++;
  c = 0;
  for (auto& [key, v] : mm) {
    v = c++;
    p.calendar.push_back(YearMonth(2000, 1) + key);
  }
  for (std::size_t r = 0; r < fr.size(); ++r) {
    p.firm.push_back(fm[fr[r]]);
    p.month.push_back(mm[mr[r]]);
  }
  p.n_firms = static_cast<int>(fm.size());
  p.n_months = static_cast<int>(mm.size());
  return p;
}

}  // namespace sentfeed::oracle
