#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "sinessl/errors.hpp"
#include "sinessl/harness/cli.hpp"
#include "sinessl/harness/config.hpp"
#include "sinessl/harness/experiment.hpp"

namespace sinessl {
namespace {
namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sinessl_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

ToolConfig tiny(const fs::path& root) {
  ToolConfig c;
  c.data.unlabeled = 48;
  c.data.test_per_class = 10;
  c.train.iterations = 4;
  c.train.eval_every = 2;
  c.experiment.seeds = {1, 2};
  c.paths.runs_dir = root / "runs";
  c.paths.pool_dir = root / "pool";
  return c;
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "sinessl");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

TEST(Config, UnknownSectionRejected) {
  ToolConfig c;
  EXPECT_THROW(apply_json(c, nlohmann::json{{"trian", nlohmann::json::object()}}), ConfigError);
}

TEST(Config, MissingFileNamesPath) {
  try {
    (void)load_config("/nonexistent/cfg.json");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/cfg.json"), std::string::npos);
  }
}

TEST(Config, OverlayKeepsUnsetFields) {
  ToolConfig c;
  apply_json(c, nlohmann::json{{"train", {{"iterations", 17}}}, {"schedule", {{"beta", 0.02}}}});
  EXPECT_EQ(c.train.iterations, 17u);
  EXPECT_EQ(c.train.mu, TrainConfig{}.mu);
  const auto& s = std::get<schedule::SinusoidalDecay>(c.threshold_schedule());
  EXPECT_DOUBLE_EQ(s.beta, 0.02);
  EXPECT_DOUBLE_EQ(s.alpha, schedule::SinusoidalDecay{}.alpha);
}

TEST(Config, JsonRoundTrip) {
  ToolConfig c = tiny("/tmp/x");
  c.schedule = {{"kind", "adaptive_ascent"}, {"momentum", 0.99}};
  ToolConfig d;
  apply_json(d, to_json(c));
  EXPECT_EQ(to_json(d), to_json(c));
}

TEST(Config, LabeledSizeMustBePositive) {
  ToolConfig c;
  c.experiment.labeled_sizes = {30, 0};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, UnknownExperimentRejected) {
  ToolConfig c;
  c.experiment.name = "table9";
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Grid, AblationHasFourSchedulesTimesSeeds) {
  ToolConfig c;
  const auto runs = expand_grid(c);
  ASSERT_EQ(runs.size(), 12u);
  const std::vector<std::string> cells{"fixed", "adaptive_ascent", "linear_decay", "sinusoidal_decay"};
  for (std::size_t i = 0; i < runs.size(); ++i) {
    EXPECT_EQ(runs[i].cell, cells[i / 3]);
    EXPECT_EQ(runs[i].seed, c.experiment.seeds[i % 3]);
    EXPECT_EQ(runs[i].config.train.seed, runs[i].seed);
    EXPECT_EQ(kind_name(runs[i].config.threshold_schedule()), cells[i / 3]);
  }
}

TEST(Grid, PoolComparisonSizesArePerClass) {
  ToolConfig c;
  c.experiment.name = "pool_comparison";
  const auto runs = expand_grid(c);
  ASSERT_EQ(runs.size(), 3u * 4u * 3u);
  EXPECT_EQ(runs.front().cell, "real_clean_L30");
  EXPECT_EQ(runs.front().config.data.labeled_per_class, 30u);
  EXPECT_EQ(runs.back().cell, "synthetic_L6");
  EXPECT_EQ(runs.back().config.data.labeled_per_class, 6u);
  EXPECT_EQ(runs.back().config.data.pool_kind, PoolKind::Synthetic);
}

TEST(Grid, BaselinePairsSupervisedWithSsl) {
  ToolConfig c;
  c.experiment.name = "baseline_vs_ssl";
  const auto runs = expand_grid(c);
  ASSERT_EQ(runs.size(), 6u);
  EXPECT_EQ(runs[0].cell, "supervised");
  EXPECT_EQ(runs[0].config.train.lambda_u, 0.0);
  EXPECT_EQ(runs[3].cell, "ssl_sinusoidal_decay");
  EXPECT_EQ(runs[3].config.train.lambda_u, c.train.lambda_u);
}

TEST(Experiment, RunsSummarizesAndSkipsCompleted) {
  const fs::path root = scratch("ablation");
  ToolConfig c = tiny(root);
  c.experiment.schedules = {{{"kind", "fixed"}}, {{"kind", "sinusoidal_decay"}}};
  std::vector<std::string> log;
  const auto rows = run_experiment(c, [&](const std::string& l) { log.push_back(l); });
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].cell, "fixed");
  EXPECT_EQ(rows[1].cell, "sinusoidal_decay");
  for (const auto& r : rows) {
    EXPECT_EQ(r.seeds, (std::vector<std::uint64_t>{1, 2}));
    EXPECT_LE(r.min_accuracy, r.mean_accuracy);
    EXPECT_LE(r.mean_accuracy, r.max_accuracy);
    EXPECT_GE(r.std_accuracy, 0.0);
  }
  const fs::path exp = root / "runs" / "ablation_thresholds";
  for (const char* f : {"grid.json", "config.json", "summary.csv", "threshold_trace.csv", "mask_rate_trace.csv"}) {
    EXPECT_TRUE(fs::exists(exp / f)) << f;
  }
  const fs::path run = exp / "fixed" / "1";
  for (const char* f : {"metrics.csv", "trace.csv", "confusion.csv", "config.json", "done.marker"}) {
    EXPECT_TRUE(fs::exists(run / f)) << f;
  }
  EXPECT_EQ(slurp(exp / "threshold_trace.csv").substr(0, 25), "cell,seed,iter,threshold\n");

  const std::string metrics = slurp(run / "metrics.csv");
  log.clear();
  const auto again = run_experiment(c, [&](const std::string& l) { log.push_back(l); });
  ASSERT_EQ(log.size(), 4u);
  for (const auto& l : log) EXPECT_NE(l.find("skipped"), std::string::npos) << l;
  EXPECT_EQ(slurp(run / "metrics.csv"), metrics);

  const auto read = read_summary_csv(exp / "summary.csv");
  ASSERT_EQ(read.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(read[i].cell, again[i].cell);
    EXPECT_NEAR(read[i].mean_accuracy, again[i].mean_accuracy, 1e-9);
    EXPECT_EQ(read[i].seeds, again[i].seeds);
  }
}

TEST(Experiment, StdUsesSampleVariance) {
  const fs::path exp = scratch("report") / "custom";
  const std::vector<double> acc{0.5, 0.7, 0.9};
  for (std::size_t s = 0; s < acc.size(); ++s) {
    const fs::path run = exp / "cell" / std::to_string(s + 1);
    fs::create_directories(run);
    std::ofstream(run / "metrics.csv") << kMetricsHeader << "\n10,0.1,0.1,0.5,0.9," << acc[s] << '\n';
    std::ofstream(run / "trace.csv") << "iter,threshold,mask_rate\n0,0.95,0.25\n";
    std::ofstream(run / "done.marker") << acc[s] << '\n';
  }
  const auto files = report(exp);
  ASSERT_EQ(files.summary.size(), 1u);
  EXPECT_NEAR(files.summary[0].mean_accuracy, 0.7, 1e-12);
  EXPECT_NEAR(files.summary[0].std_accuracy, 0.2, 1e-12);
  EXPECT_EQ(slurp(files.mask_rate_trace_csv), "cell,seed,iter,mask_rate\ncell,1,0,0.25\ncell,2,0,0.25\ncell,3,0,0.25\n");
}

TEST(Experiment, ReportWithoutRunsFails) {
  EXPECT_THROW(report(scratch("empty")), IoError);
  EXPECT_THROW(report("/nonexistent/runs/x"), IoError);
}

TEST(Experiment, MissingSyntheticPoolNamesPath) {
  const fs::path root = scratch("nopool");
  ToolConfig c = tiny(root);
  c.data.pool_kind = PoolKind::Synthetic;
  try {
    execute_run(c, root / "run");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find((root / "pool" / "pool_synthetic.tnsr").string()), std::string::npos);
  }
}

TEST(Cli, ExitCodes) {
  const fs::path root = scratch("cli");
  EXPECT_EQ(run_cli({"frobnicate"}), 2);
  EXPECT_EQ(run_cli({"train-ssl", "--config", (root / "missing.json").string()}), 2);
  EXPECT_EQ(run_cli({"train-ssl", "--schedule", "cosine", "--out", (root / "a").string()}), 2);
  EXPECT_EQ(run_cli({"report", (root / "nothing").string()}), 1);
  EXPECT_EQ(run_cli({"gen-data", "--out", (root / "data").string(), "--unlabeled", "12"}), 0);
  EXPECT_TRUE(fs::exists(root / "data" / "unlabeled.tnsr"));
  EXPECT_EQ(slurp(root / "data" / "unlabeled.csv").substr(0, 3), "id\n");
}

}  // namespace
}  // namespace sinessl
