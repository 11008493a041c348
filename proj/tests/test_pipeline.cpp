#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sentfeed/pipeline/config.hpp"
#include "sentfeed/pipeline/manifest.hpp"
#include "sentfeed/pipeline/run.hpp"

using namespace sentfeed;
using namespace sentfeed::pipeline;
namespace fs = std::filesystem;

namespace {

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const StageFailure& e) {
    return e.kind();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::InvalidArgument;
}

json small_config() {
  return json::parse(R"({
    "seed": 11,
    "output_dir": "out",
    "simulate": {"model": "feedback", "T": 240, "start": "2000-01", "kappa_bps": 1.06, "rho": 0.94,
                 "panel": {"n_firms": 40, "n_months": 48}},
    "lp": {"horizons": [1, 3, 6, 12]},
    "bootstrap": {"B": 50},
    "panel": {"horizons": [1, 3], "terms": ["eps*low_breadth"], "jackknife_folds": 5, "time_block_B": 20},
    "sorts": {"n_buckets": 5, "weighting": "value", "costs_bps": [0, 10]},
    "adjustments": {"terms": ["eps*low_breadth"], "B": 40},
    "falsifications": {"lead_lag_horizons": [1, 3], "permutation_B": 49}
  })");
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("sentfeed_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string cli() {
  const char* p = std::getenv("SENTFEED_CLI");
  return p ? p : "";
}

int run_cli(const std::string& args) {
  const int rc = std::system((cli() + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Config, DefaultsAndStageList) {
  const auto cfg = parse_config(small_config());
  EXPECT_EQ(cfg.stages, stage_order());
  EXPECT_EQ(*cfg.seed, 11u);
  EXPECT_EQ(cfg.simulate->T, 240u);
  EXPECT_EQ(cfg.sorts.sort.n_buckets, 5);
}

TEST(Config, RejectsUnknownKeys) {
  auto doc = small_config();
  doc["bogus"] = 1;
  EXPECT_EQ(kind_of([&] { parse_config(doc); }), ErrorKind::SchemaViolation);
  doc = small_config();
  doc["lp"]["horizon"] = 3;
  EXPECT_EQ(kind_of([&] { parse_config(doc); }), ErrorKind::SchemaViolation);
}

TEST(Config, RejectsBadValues) {
  auto doc = small_config();
  doc["stages"] = {"shocks", "plot"};
  EXPECT_EQ(kind_of([&] { parse_config(doc); }), ErrorKind::SchemaViolation);
  doc = small_config();
  doc["lp"]["horizons"] = {3, 1};
  EXPECT_EQ(kind_of([&] { parse_config(doc); }), ErrorKind::SchemaViolation);
  doc = small_config();
  doc["seed"] = "eleven";
  EXPECT_EQ(kind_of([&] { parse_config(doc); }), ErrorKind::SchemaViolation);
}

TEST(Config, StochasticStagesNeedSeed) {
  auto doc = small_config();
  doc.erase("seed");
  doc["stages"] = {"shocks", "lp", "fit", "bootstrap"};
  EXPECT_EQ(kind_of([&] { parse_config(doc); }), ErrorKind::SchemaViolation);
}

TEST(Plan, StagesThroughTarget) {
  EXPECT_EQ(stages_through("bootstrap"), (std::vector<std::string>{"shocks", "lp", "fit", "bootstrap"}));
  EXPECT_EQ(stages_through("sorts"), (std::vector<std::string>{"sorts"}));
}

TEST(Plan, MissingPrerequisite) {
  auto doc = small_config();
  doc["stages"] = {"shocks", "fit"};
  const auto cfg = parse_config(doc);
  const auto d = ingest(cfg);
  EXPECT_EQ(kind_of([&] { run_pipeline(cfg, d); }), ErrorKind::StageDependencyMissing);
}

TEST(Plan, ReportWithoutUpstream) {
  auto doc = small_config();
  doc["stages"] = {"shocks", "report"};
  const auto cfg = parse_config(doc);
  const auto d = ingest(cfg);
  EXPECT_EQ(kind_of([&] { run_pipeline(cfg, d); }), ErrorKind::MissingUpstream);
}

TEST(Plan, ShocksOnlyWritesShocks) {
  auto doc = small_config();
  doc["stages"] = {"shocks"};
  const auto cfg = parse_config(doc);
  const auto out = run_pipeline(cfg, ingest(cfg));
  ASSERT_EQ(out.files.size(), 1u);
  EXPECT_TRUE(out.files.contains("shocks.csv"));
  ASSERT_EQ(out.manifest.stage_seconds.size(), 1u);
  EXPECT_EQ(out.manifest.stage_seconds[0].first, "shocks");
}

TEST(Pipeline, FullRunIsThreadIndependent) {
  const auto cfg = parse_config(small_config());
  const auto d = ingest(cfg);
  const auto a = run_pipeline(cfg, d, 1);
  const auto b = run_pipeline(cfg, d, 3);
  EXPECT_EQ(a.files, b.files);
  EXPECT_EQ(a.manifest.outputs, b.manifest.outputs);
  for (const char* f : {"shocks.csv", "irf.csv", "fit.csv"}) EXPECT_TRUE(a.files.contains(f)) << f;
}

TEST(Pipeline, SeedChangesStochasticOutput) {
  auto doc = small_config();
  doc["stages"] = {"shocks", "lp", "fit", "bootstrap"};
  const auto c1 = parse_config(doc);
  doc["seed"] = 12;
  const auto c2 = parse_config(doc);
  EXPECT_NE(run_pipeline(c1, ingest(c1)).manifest.outputs, run_pipeline(c2, ingest(c2)).manifest.outputs);
  EXPECT_NE(config_hash(c1), config_hash(c2));
}

TEST(Manifest, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Manifest, TopLevelKeys) {
  auto doc = small_config();
  doc["stages"] = {"shocks"};
  const auto cfg = parse_config(doc);
  const auto out = run_pipeline(cfg, ingest(cfg));
  const auto j = out.manifest.to_json();
  for (const char* k : {"toolkit_version", "config_sha256", "seed", "inputs", "stages", "outputs"})
    EXPECT_TRUE(j.contains(k)) << k;
  ASSERT_EQ(j["inputs"].size(), 1u);
  EXPECT_EQ(j["inputs"][0]["path"].get<std::string>().rfind("simulated:", 0), 0u);
}

TEST(Cli, ExitCodesAndOutputs) {
  ASSERT_FALSE(cli().empty()) << "SENTFEED_CLI not set";
  const auto dir = scratch("cli");
  auto doc = small_config();
  doc["output_dir"] = (dir / "run").string();
  doc["stages"] = {"shocks", "lp", "fit", "report"};
  std::ofstream(dir / "ok.json") << doc.dump(2);
  EXPECT_EQ(run_cli("pipeline --config " + (dir / "ok.json").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "run" / "fit.csv"));
  EXPECT_TRUE(fs::exists(dir / "run" / "_RUNINFO.json"));

  EXPECT_EQ(run_cli("shocks --config " + (dir / "ok.json").string() + " --out " + (dir / "s").string()), 0);
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir / "s")) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  EXPECT_EQ(names, (std::vector<std::string>{"_RUNINFO.json", "shocks.csv"}));

  std::ofstream(dir / "bad.json") << R"({"stages": ["shocks"], "unknown": true})";
  EXPECT_EQ(run_cli("pipeline --config " + (dir / "bad.json").string()), 2);
  EXPECT_EQ(run_cli("pipeline --config " + (dir / "missing.json").string()), 2);
  EXPECT_EQ(run_cli("pipeline --threads 0 --config " + (dir / "ok.json").string()), 2);

  doc["stages"] = {"shocks", "report"};
  std::ofstream(dir / "noup.json") << doc.dump(2);
  EXPECT_EQ(run_cli("pipeline --config " + (dir / "noup.json").string()), 3);
}

TEST(Cli, InputsResolveAgainstConfigDirectory) {
  ASSERT_FALSE(cli().empty());
  const auto dir = scratch("inputs");
  std::ofstream s(dir / "sent.csv");
  s << "month,value\n";
  Rng rng(3);
  std::normal_distribution<double> z(0.0, 1.0);
  double x = 0;
  for (int t = 0; t < 120; ++t) {
    x = 0.8 * x + z(rng);
    s << (YearMonth(2000, 1) + t).str() << ',' << x << '\n';
  }
  s.close();
  std::ofstream(dir / "c.json") << R"({"stages": ["shocks"], "inputs": {"sentiment": "sent.csv"}, "output_dir": ")" +
                                       (dir / "o").string() + "\"}";
  EXPECT_EQ(run_cli("pipeline --config " + (dir / "c.json").string()), 0);
  std::ifstream m(dir / "o" / "_RUNINFO.json");
  const auto j = json::parse(m);
  EXPECT_EQ(j["inputs"][0]["path"], "sent.csv");
  EXPECT_TRUE(j["seed"].is_null());
}
