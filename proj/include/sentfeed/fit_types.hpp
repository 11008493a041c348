#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "sentfeed/error.hpp"

namespace sentfeed {

// Reduced-form feedback r_{t+1} = rho r_t + kappa eps_{t+1}; kappa in bps per
// one s.d. shock.
struct FeedbackParams {
  double kappa_bps = 0.0;
  double rho = 0.0;
};

// Which geometric shape an IRF vector is compared against:
//   LevelH          kappa rho^h
//   LevelHMinus1    kappa rho^(h-1)
//   Cumulative      kappa (1 - rho^h) / (1 - rho)
enum class IrfConvention { LevelH, LevelHMinus1, Cumulative };

constexpr std::string_view to_string(IrfConvention c) {
  switch (c) {
    case IrfConvention::LevelH: return "level-h";
    case IrfConvention::LevelHMinus1: return "level-h-minus-1";
    case IrfConvention::Cumulative: return "cumulative";
  }
  return "?";
}

inline IrfConvention parse_convention(std::string_view s) {
  if (s == "level-h") return IrfConvention::LevelH;
  if (s == "level-h-minus-1") return IrfConvention::LevelHMinus1;
  if (s == "cumulative") return IrfConvention::Cumulative;
  fail(ErrorKind::InvalidArgument, "unknown IRF convention '" + std::string(s) + "'");
}

enum class FitMethod { Gmm, Wls, NlsConstrained };

constexpr std::string_view to_string(FitMethod m) {
  switch (m) {
    case FitMethod::Gmm: return "gmm";
    case FitMethod::Wls: return "wls";
    case FitMethod::NlsConstrained: return "nls-constrained";
  }
  return "?";
}

inline FitMethod parse_method(std::string_view s) {
  if (s == "gmm") return FitMethod::Gmm;
  if (s == "wls") return FitMethod::Wls;
  if (s == "nls-constrained" || s == "nls") return FitMethod::NlsConstrained;
  fail(ErrorKind::InvalidArgument, "unknown fit method '" + std::string(s) + "'");
}

struct GeometricFit {
  double kappa_bps = 0.0;
  double rho = 0.0;
  double half_life = 0.0;  // months, +inf when rho is at the unit boundary
  double objective = 0.0;  // J-statistic for gmm, weighted SSE otherwise
  int dof = 0;             // #horizons - 2
  double j_pvalue = std::numeric_limits<double>::quiet_NaN();
  double r_squared = 0.0;  // 1 - SSE/SST over the beta vector, unweighted
  FitMethod method = FitMethod::Wls;
  IrfConvention convention = IrfConvention::LevelHMinus1;
  bool weighting_fallback = false;  // gmm/wls weights replaced by diagonal/identity
  bool boundary = false;            // optimum on the edge of the search box
  // Sandwich covariance of (kappa_bps, rho); absent when it cannot be formed.
  std::optional<Eigen::Matrix2d> param_cov;

  std::string flags() const {
    std::string f;
    if (weighting_fallback) f += "weighting_fallback";
    if (boundary) f += f.empty() ? "boundary" : "|boundary";
    return f.empty() ? "none" : f;
  }
};

}  // namespace sentfeed
