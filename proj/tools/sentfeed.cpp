// sentfeed command-line driver.
//
// Exit codes: 0 success, 2 validation error (config, inputs, stage plan),
// 3 failure inside a stage.

#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sentfeed/pipeline/config.hpp"
#include "sentfeed/pipeline/manifest.hpp"
#include "sentfeed/pipeline/run.hpp"

namespace sp = sentfeed::pipeline;

namespace {

constexpr int kValidation = 2;
constexpr int kStage = 3;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  unsigned threads = 1;
};

sp::RunConfig load(const Globals& g) {
  sentfeed::require(!g.config.empty(), sentfeed::ErrorKind::SchemaViolation, "--config is required");
  auto cfg = sp::load_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (g.out) cfg.output_dir = *g.out;
  return cfg;
}

void report_written(const std::string& dir, const sp::FileMap& files) {
  for (const auto& [name, content] : files) std::cout << dir << '/' << name << '\n';
  std::cout << dir << "/_RUNINFO.json\n";
}

int run_stages(const Globals& g, const std::optional<std::string>& target) {
  auto cfg = load(g);
  if (target) {
    if (*target == "report") {
      bool has = false;
      for (const auto& s : cfg.stages) has |= s == "report";
      if (!has) cfg.stages.push_back("report");
    } else {
      cfg.stages = sp::stages_through(*target);
    }
  }
  // Re-validate seed requirements for the (possibly changed) stage list.
  for (const auto& s : cfg.stages)
    sentfeed::require(!sp::stage_is_stochastic(s) || cfg.seed.has_value(), sentfeed::ErrorKind::SchemaViolation,
                      "stage '" + s + "' is stochastic and needs --seed or a config seed");
  const auto data = sp::ingest(cfg);
  for (const auto& n : data.notes) std::cerr << "ingest: " << n << '\n';
  const auto out = sp::run_pipeline(cfg, data, g.threads);
  sp::write_outputs(cfg.output_dir, out.files, out.manifest);
  report_written(cfg.output_dir, out.files);
  return 0;
}

int run_simulate(const Globals& g) {
  auto cfg = load(g);
  sentfeed::require(cfg.simulate.has_value(), sentfeed::ErrorKind::SchemaViolation, "config has no simulate section");
  sentfeed::require(cfg.seed.has_value(), sentfeed::ErrorKind::SchemaViolation, "simulate needs a seed");
  const auto files = sp::simulate_scenario(*cfg.simulate, *cfg.seed);
  sp::RunManifest m;
  m.config_hash = sp::config_hash(cfg);
  m.seeded = true;
  m.seed = *cfg.seed;
  for (const auto& [name, content] : files) m.outputs[name] = sp::sha256_hex(content);
  sp::write_outputs(cfg.output_dir, files, m);
  report_written(cfg.output_dir, files);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sentiment-feedback simulation and estimation toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON run configuration");
  app.add_option("--seed", g.seed, "master seed (overrides the config)");
  app.add_option("--out", g.out, "output directory (overrides the config)");
  app.add_option("--threads", g.threads, "worker threads")->check(CLI::Range(1u, 1024u));
  app.set_version_flag("--version", SENTFEED_VERSION);

  const std::vector<std::pair<std::string, std::string>> commands{
      {"simulate", "simulate a scenario (feedback, piecewise, mfg or state)"},
      {"shocks", "AR(1) sentiment shocks"},
      {"irf", "local-projection IRF"},
      {"fit", "geometric kappa-rho fit"},
      {"bootstrap", "parametric IRF bootstrap"},
      {"panel", "firm x month fixed-effects regressions"},
      {"sort", "portfolio sorts, turnover and costs"},
      {"adjust", "Holm and Romano-Wolf adjusted p-values"},
      {"falsify", "lead-lag and permutation falsification tests"},
      {"report", "report tables for the configured stages"},
      {"pipeline", "run the configured stage list"},
  };
  const std::map<std::string, std::string> target{
      {"shocks", "shocks"}, {"irf", "lp"},         {"fit", "fit"},         {"bootstrap", "bootstrap"},
      {"panel", "panel"},   {"sort", "sorts"},     {"adjust", "adjustments"}, {"falsify", "falsifications"},
      {"report", "report"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidation;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    if (cmd == "simulate") return run_simulate(g);
    if (cmd == "pipeline") return run_stages(g, std::nullopt);
    return run_stages(g, target.at(cmd));
  } catch (const sp::StageFailure& e) {
    std::cerr << "error [" << sentfeed::to_string(e.kind()) << "] " << e.what() << '\n';
    return kStage;
  } catch (const sentfeed::Error& e) {
    std::cerr << "error [" << sentfeed::to_string(e.kind()) << "] " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kStage;
  }
}
