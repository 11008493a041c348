#pragma once

// Run configuration: one JSON document with a section per stage. Missing
// keys take the defaults below; unknown keys are rejected so typos fail
// loudly.

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sentfeed/econometrics.hpp"
#include "sentfeed/error.hpp"
#include "sentfeed/fit_types.hpp"
#include "sentfeed/month.hpp"
#include "sentfeed/portfolio.hpp"
#include "sentfeed/structural.hpp"

namespace sentfeed::pipeline {

using json = nlohmann::json;

// Execution order; a stage may only run if its prerequisites run too.
inline const std::vector<std::string>& stage_order() {
  static const std::vector<std::string> order{"shocks", "lp",          "fit",           "bootstrap", "panel",
                                              "sorts",  "adjustments", "falsifications", "report"};
  return order;
}

inline const std::map<std::string, std::vector<std::string>>& stage_prerequisites() {
  static const std::map<std::string, std::vector<std::string>> deps{
      {"shocks", {}},
      {"lp", {"shocks"}},
      {"fit", {"lp"}},
      {"bootstrap", {"fit"}},
      {"panel", {"shocks"}},
      {"sorts", {}},
      {"adjustments", {"panel"}},
      {"falsifications", {"shocks"}},
      {"report", {}},
  };
  return deps;
}

inline bool stage_is_stochastic(const std::string& s) {
  return s == "bootstrap" || s == "panel" || s == "adjustments" || s == "falsifications";
}

struct InputPaths {
  std::string sentiment;
  std::string market;
  std::string panel;
  std::map<std::string, std::string> factors;
  bool forward_carry_breadth = false;
  std::string base_dir;  // relative paths resolve against this

  std::string resolve(const std::string& path) const {
    if (base_dir.empty() || path.empty() || path.front() == '/') return path;
    return base_dir + "/" + path;
  }
};

struct PanelSimSection {
  int n_firms = 150;
  int n_months = 0;  // 0: span the simulated shock sample
  double kappa_bps = 10.0;
  double low_breadth_multiplier = 2.0;
  double idio_sd = 0.02;
  double month_sd = 0.01;
};

struct SimulateSection {
  std::string model = "feedback";  // feedback | piecewise | mfg | state
  std::size_t T = 420;
  YearMonth start{1990, 1};
  double kappa_bps = 1.06;
  double rho = 0.94;
  double sentiment_phi = 0.8;
  PiecewiseConfig piecewise;
  MfgConfig mfg;
  std::vector<double> mfg_theta{-6.0, -4.0, -2.0, 0.0, 2.0, 4.0, 6.0};
  // state model: V alternates between two levels in blocks.
  double V_low = 10.0;
  double V_high = 30.0;
  std::size_t V_block = 120;
  double kappa_low = 1.0;
  double kappa_high = 2.0;
  double rho_low = 0.95;
  double rho_high = 0.90;
  PanelSimSection panel;
};

struct ShocksSection {
  bool demean = true;
  int hac_lag = 12;
  bool flip = false;
};

struct LpSection {
  std::vector<int> horizons{1, 3, 6, 12};
  LpMode mode = LpMode::Level;
  LpCovariance covariance = LpCovariance::BlockDiagonal;
  int block_len = 12;
  int block_reps = 500;
};

struct FitSection {
  FitMethod method = FitMethod::Wls;
  IrfConvention convention = IrfConvention::LevelHMinus1;
  FitOptions options;
  bool rolling = false;
  std::size_t rolling_window = 60;
  std::size_t rolling_step = 1;
};

struct BootstrapSection {
  int B = 1000;
  double level = 0.95;
};

struct PanelSection {
  std::vector<int> horizons{1, 3, 6};
  std::vector<std::string> terms{"eps*low_breadth", "eps*high_vix*low_breadth"};
  bool firm_fe = true;
  bool month_fe = true;
  bool cluster_firm = true;
  bool cluster_month = true;
  int jackknife_folds = 10;
  int time_block_len = 6;
  int time_block_B = 500;
  std::vector<std::pair<std::string, YearMonth>> post_dates;
};

struct SortsSection {
  SortConfig sort;
  int sharpe_lag = 12;
};

struct AdjustmentsSection {
  std::vector<std::string> terms{"eps*low_breadth"};
  int B = 1000;
};

struct FalsificationsSection {
  std::vector<int> lead_lag_horizons{1, 3, 6};
  int permutation_B = 999;
  std::string permutation_term = "eps*low_breadth";
};

struct RunConfig {
  std::optional<std::uint64_t> seed;
  std::string output_dir = "out";
  std::vector<std::string> stages;
  InputPaths inputs;
  std::optional<SimulateSection> simulate;
  ShocksSection shocks;
  LpSection lp;
  FitSection fit;
  BootstrapSection bootstrap;
  PanelSection panel;
  SortsSection sorts;
  AdjustmentsSection adjustments;
  FalsificationsSection falsifications;
  json source = json::object();  // effective document, for hashing
};

namespace detail {

class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    require(j_.is_object(), ErrorKind::SchemaViolation, "config: '" + path_ + "' must be an object");
  }

  ~Section() = default;

  // Throws for keys never looked up.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      require(seen_.contains(it.key()), ErrorKind::SchemaViolation,
              "config: unknown key '" + path_ + "." + it.key() + "'");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  template <class T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      fail(ErrorKind::SchemaViolation, "config: '" + path_ + "." + key + "' has the wrong type");
    }
  }

  void get_month(const std::string& key, YearMonth& out) {
    std::string s;
    get(key, s);
    if (!s.empty()) out = YearMonth::parse(s);
  }

  Section sub(const std::string& key) {
    seen_.insert(key);
    return Section(j_.at(key), path_ + "." + key);
  }

  const json& raw() const { return j_; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline RunConfig parse_config(const json& doc) {
  RunConfig cfg;
  cfg.source = doc;
  detail::Section root(doc, "$");
  if (root.has("seed")) {
    const auto& s = doc.at("seed");
    require(s.is_number_integer() && s.get<long long>() >= 0, ErrorKind::SchemaViolation,
            "config: seed must be a non-negative integer");
    cfg.seed = s.get<std::uint64_t>();
  }
  root.get("output_dir", cfg.output_dir);
  root.get("stages", cfg.stages);
  if (cfg.stages.empty()) cfg.stages = stage_order();
  for (const auto& s : cfg.stages)
    require(stage_prerequisites().contains(s), ErrorKind::SchemaViolation, "config: unknown stage '" + s + "'");

  if (root.has("inputs")) {
    auto in = root.sub("inputs");
    in.get("sentiment", cfg.inputs.sentiment);
    in.get("market", cfg.inputs.market);
    in.get("panel", cfg.inputs.panel);
    in.get("factors", cfg.inputs.factors);
    in.get("forward_carry_breadth", cfg.inputs.forward_carry_breadth);
    in.finish();
  }
  if (root.has("simulate")) {
    auto s = root.sub("simulate");
    SimulateSection sim;
    s.get("model", sim.model);
    require(sim.model == "feedback" || sim.model == "piecewise" || sim.model == "mfg" || sim.model == "state",
            ErrorKind::SchemaViolation, "config: simulate.model must be feedback|piecewise|mfg|state");
    s.get("T", sim.T);
    s.get_month("start", sim.start);
    s.get("kappa_bps", sim.kappa_bps);
    s.get("rho", sim.rho);
    s.get("sentiment_phi", sim.sentiment_phi);
    if (s.has("piecewise")) {
      auto p = s.sub("piecewise");
      p.get("lambda", sim.piecewise.lambda);
      p.get("psi", sim.piecewise.psi);
      p.get("theta", sim.piecewise.theta);
      p.get("s_bar", sim.piecewise.s_bar);
      p.finish();
      sim.piecewise.validate();
    }
    if (s.has("mfg")) {
      auto p = s.sub("mfg");
      p.get("n_R", sim.mfg.n_R);
      p.get("n_I", sim.mfg.n_I);
      p.get("gamma_R", sim.mfg.gamma_R);
      p.get("gamma_I", sim.mfg.gamma_I);
      p.get("sigma2", sim.mfg.sigma2);
      p.get("supply", sim.mfg.supply);
      if (p.has("x_bar")) {
        double x = 0.0;
        p.get("x_bar", x);
        sim.mfg.x_bar = x;
      }
      p.get("theta", sim.mfg_theta);
      p.finish();
      sim.mfg.validate();
    }
    if (s.has("state")) {
      auto p = s.sub("state");
      p.get("V_low", sim.V_low);
      p.get("V_high", sim.V_high);
      p.get("V_block", sim.V_block);
      p.get("kappa_low", sim.kappa_low);
      p.get("kappa_high", sim.kappa_high);
      p.get("rho_low", sim.rho_low);
      p.get("rho_high", sim.rho_high);
      p.finish();
      require(sim.V_block >= 1, ErrorKind::SchemaViolation, "config: simulate.state.V_block must be >= 1");
    }
    if (s.has("panel")) {
      auto p = s.sub("panel");
      p.get("n_firms", sim.panel.n_firms);
      p.get("n_months", sim.panel.n_months);
      p.get("kappa_bps", sim.panel.kappa_bps);
      p.get("low_breadth_multiplier", sim.panel.low_breadth_multiplier);
      p.get("idio_sd", sim.panel.idio_sd);
      p.get("month_sd", sim.panel.month_sd);
      p.finish();
    }
    s.finish();
    require(sim.T >= 30, ErrorKind::SchemaViolation, "config: simulate.T must be >= 30");
    cfg.simulate = sim;
  }
  if (root.has("shocks")) {
    auto s = root.sub("shocks");
    s.get("demean", cfg.shocks.demean);
    s.get("hac_lag", cfg.shocks.hac_lag);
    s.get("flip", cfg.shocks.flip);
    s.finish();
  }
  if (root.has("lp")) {
    auto s = root.sub("lp");
    s.get("horizons", cfg.lp.horizons);
    std::string mode = std::string(to_string(cfg.lp.mode));
    s.get("mode", mode);
    cfg.lp.mode = parse_lp_mode(mode);
    std::string cov = "block-diagonal";
    s.get("covariance", cov);
    require(cov == "block-diagonal" || cov == "moving-block", ErrorKind::SchemaViolation,
            "config: lp.covariance must be block-diagonal|moving-block");
    cfg.lp.covariance = cov == "moving-block" ? LpCovariance::MovingBlock : LpCovariance::BlockDiagonal;
    s.get("block_len", cfg.lp.block_len);
    s.get("block_reps", cfg.lp.block_reps);
    s.finish();
  }
  if (root.has("fit")) {
    auto s = root.sub("fit");
    std::string method = std::string(to_string(cfg.fit.method));
    std::string conv = std::string(to_string(cfg.fit.convention));
    s.get("method", method);
    s.get("convention", conv);
    cfg.fit.method = parse_method(method);
    cfg.fit.convention = parse_convention(conv);
    s.get("rho_lo", cfg.fit.options.rho_lo);
    s.get("rho_hi", cfg.fit.options.rho_hi);
    s.get("grid_points", cfg.fit.options.grid_points);
    s.get("rolling", cfg.fit.rolling);
    s.get("rolling_window", cfg.fit.rolling_window);
    s.get("rolling_step", cfg.fit.rolling_step);
    s.finish();
  }
  if (root.has("bootstrap")) {
    auto s = root.sub("bootstrap");
    s.get("B", cfg.bootstrap.B);
    s.get("level", cfg.bootstrap.level);
    s.finish();
  }
  if (root.has("panel")) {
    auto s = root.sub("panel");
    s.get("horizons", cfg.panel.horizons);
    s.get("terms", cfg.panel.terms);
    s.get("firm_fe", cfg.panel.firm_fe);
    s.get("month_fe", cfg.panel.month_fe);
    s.get("cluster_firm", cfg.panel.cluster_firm);
    s.get("cluster_month", cfg.panel.cluster_month);
    s.get("jackknife_folds", cfg.panel.jackknife_folds);
    s.get("time_block_len", cfg.panel.time_block_len);
    s.get("time_block_B", cfg.panel.time_block_B);
    std::map<std::string, std::string> post;
    s.get("post_dates", post);
    for (const auto& [name, date] : post) cfg.panel.post_dates.emplace_back(name, YearMonth::parse(date));
    s.finish();
  }
  if (root.has("sorts")) {
    auto s = root.sub("sorts");
    auto& sc = cfg.sorts.sort;
    s.get("signal", sc.signal);
    s.get("n_buckets", sc.n_buckets);
    std::string w = std::string(to_string(sc.weighting));
    s.get("weighting", w);
    sc.weighting = parse_weighting(w);
    if (s.has("universe")) {
      std::string u;
      s.get("universe", u);
      sc.universe = u;
    }
    s.get("skip_month", sc.skip_month);
    s.get("costs_bps", sc.cost_bps_oneway);
    s.get("delisting_column", sc.delisting_column);
    s.get("sharpe_lag", cfg.sorts.sharpe_lag);
    s.finish();
    sc.validate();
  }
  if (root.has("adjustments")) {
    auto s = root.sub("adjustments");
    s.get("terms", cfg.adjustments.terms);
    s.get("B", cfg.adjustments.B);
    s.finish();
  }
  if (root.has("falsifications")) {
    auto s = root.sub("falsifications");
    s.get("lead_lag_horizons", cfg.falsifications.lead_lag_horizons);
    s.get("permutation_B", cfg.falsifications.permutation_B);
    s.get("permutation_term", cfg.falsifications.permutation_term);
    s.finish();
  }
  root.finish();

  require(!cfg.lp.horizons.empty() && std::is_sorted(cfg.lp.horizons.begin(), cfg.lp.horizons.end()),
          ErrorKind::SchemaViolation, "config: lp.horizons must be non-empty and increasing");
  require(cfg.bootstrap.B >= 1 && cfg.adjustments.B >= 1 && cfg.panel.time_block_B >= 1 &&
              cfg.falsifications.permutation_B >= 1,
          ErrorKind::SchemaViolation, "config: replication counts must be >= 1");
  for (const auto& s : cfg.stages)
    require(!stage_is_stochastic(s) || cfg.seed.has_value(), ErrorKind::SchemaViolation,
            "config: stage '" + s + "' is stochastic and needs a seed");
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::SchemaViolation, "cannot open config '" + path + "'");
  json doc;
  try {
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::SchemaViolation, path + ": " + e.what());
  }
  auto cfg = parse_config(doc);
  const auto slash = path.find_last_of('/');
  if (slash != std::string::npos) cfg.inputs.base_dir = path.substr(0, slash);
  return cfg;
}

}  // namespace sentfeed::pipeline
