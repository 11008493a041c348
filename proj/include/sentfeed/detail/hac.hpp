#pragma once

#include <Eigen/Dense>

#include "sentfeed/error.hpp"

namespace sentfeed::detail {

// Bartlett-kernel long-run sum of outer products of the score rows:
//   S = sum_t s_t s_t' + sum_{l=1}^{L} (1 - l/(L+1)) sum_t (s_t s_{t-l}' + s_{t-l} s_t')
// Unnormalized; callers sandwich it between their own bread.
inline Eigen::MatrixXd bartlett_long_run(const Eigen::MatrixXd& scores, int lag) {
  require(lag >= 0, ErrorKind::LagNegative, "HAC truncation lag must be >= 0");
  const Eigen::Index n = scores.rows();
  Eigen::MatrixXd s = scores.transpose() * scores;
  for (int l = 1; l <= lag && l < n; ++l) {
    const double w = 1.0 - static_cast<double>(l) / static_cast<double>(lag + 1);
    Eigen::MatrixXd gamma = scores.bottomRows(n - l).transpose() * scores.topRows(n - l);
    s += w * (gamma + gamma.transpose());
  }
  return s;
}

}  // namespace sentfeed::detail
