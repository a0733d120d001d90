#include "sinessl/harness/cli.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "sinessl/errors.hpp"
#include "sinessl/harness/config.hpp"
#include "sinessl/harness/experiment.hpp"
#include "sinessl/harness/pipeline.hpp"
#include "sinessl/harness/runtime.hpp"

namespace sinessl {
namespace fs = std::filesystem;
namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> iterations;
  std::optional<std::size_t> num_samples;
  std::optional<std::size_t> batch;
  std::optional<std::string> checkpoint;
  std::optional<std::string> pool_kind;
  std::optional<std::size_t> labeled_per_class;
  std::optional<std::size_t> unlabeled;
  std::optional<std::string> schedule;
  std::optional<double> lambda_u;
  std::optional<std::string> name;
  std::optional<std::string> runs_dir;
  std::optional<std::string> pool;
  std::vector<std::uint64_t> seeds;
  std::string report_dir;
};

ToolConfig base_config(const Options& o) {
  ToolConfig cfg = o.config.empty() ? ToolConfig{} : load_config(o.config);
  if (o.pool_kind) cfg.data.pool_kind = parse_pool_kind(*o.pool_kind);
  if (o.labeled_per_class) cfg.data.labeled_per_class = *o.labeled_per_class;
  if (o.unlabeled) cfg.data.unlabeled = *o.unlabeled;
  if (o.pool) cfg.data.synthetic_pool = *o.pool;
  if (o.schedule) cfg.schedule = nlohmann::json{{"kind", *o.schedule}};
  if (o.lambda_u) cfg.train.lambda_u = *o.lambda_u;
  if (o.name) cfg.experiment.name = *o.name;
  if (o.runs_dir) cfg.paths.runs_dir = *o.runs_dir;
  if (!o.seeds.empty()) cfg.experiment.seeds = o.seeds;
  if (o.num_samples) cfg.sampler.num_samples = *o.num_samples;
  if (o.batch) cfg.sampler.batch = *o.batch;
  return cfg;
}

void say(const std::string& line) { std::cerr << line << std::endl; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int gen_data(const Options& o) {
  ToolConfig cfg = base_config(o);
  if (o.seed) cfg.data.seed = *o.seed;
  cfg.validate();
  const fs::path out = o.out ? fs::path(*o.out) : cfg.paths.data_dir;
  DatasetBundle b = make_bundle(cfg.bundle_spec());
  check_disjoint(b);
  save_bundle(out, b);
  write_json(out / "config.json", to_json(cfg));
  const auto gap = bayes_gap_check(b);
  std::printf("wrote %zu labeled, %zu unlabeled (%s), %zu test images to %s; hand classifier accuracy %.4f\n",
              b.labeled.size(), b.unlabeled.size(), pool_kind_name(b.unlabeled.kind).c_str(), b.test.size(),
              out.string().c_str(), gap.accuracy);
  return 0;
}

int train_diffusion(const Options& o) {
  ToolConfig cfg = base_config(o);
  if (o.seed) cfg.diffusion.seed = *o.seed;
  if (o.iterations) cfg.diffusion.iterations = *o.iterations;
  cfg.validate();
  const DenoiserStage st = train_diffusion_stage(cfg, o.out ? fs::path(*o.out) : cfg.paths.denoiser_dir);
  std::printf("trained denoiser on %zu real images for %zu iterations in %.1f s; final loss %.5f; checkpoint %s\n",
              st.train_images, cfg.diffusion.iterations, st.seconds, st.final_loss, st.checkpoint.string().c_str());
  return 0;
}

int sample(const Options& o) {
  ToolConfig cfg = base_config(o);
  if (o.seed) cfg.sampler.seed = *o.seed;
  cfg.validate();
  const fs::path ckpt = o.checkpoint ? fs::path(*o.checkpoint) : cfg.paths.denoiser_dir / "checkpoint";
  const SampleStage st = sample_stage(cfg, ckpt, o.out ? fs::path(*o.out) : cfg.paths.pool_dir);
  std::printf("sampled %zu images in %.1f s into %s\n", st.count, st.seconds, st.pool.string().c_str());
  return 0;
}

int train_ssl(const Options& o) {
  ToolConfig cfg = base_config(o);
  if (o.seed) cfg.train.seed = *o.seed;
  if (o.iterations) cfg.train.iterations = *o.iterations;
  cfg.validate();
  const fs::path out =
      o.out ? fs::path(*o.out) : cfg.paths.runs_dir / "train_ssl" / std::to_string(cfg.train.seed);
  const auto t0 = std::chrono::steady_clock::now();
  execute_run(cfg, out);
  std::printf("final test accuracy %.4f after %zu iterations (%.1f s); outputs in %s\n",
              final_accuracy(out / "metrics.csv"), cfg.train.iterations, seconds_since(t0), out.string().c_str());
  return 0;
}

int experiment(const Options& o) {
  ToolConfig cfg = base_config(o);
  if (o.iterations) cfg.train.iterations = *o.iterations;
  cfg.validate();
  const auto rows = run_experiment(cfg, [&](const std::string& line) { say("[" + cfg.experiment.name + "] " + line); });
  std::printf("%-28s %10s %10s  seeds\n", "cell", "mean", "std");
  for (const auto& r : rows) {
    std::printf("%-28s %10.4f %10.4f  %zu\n", r.cell.c_str(), r.mean_accuracy, r.std_accuracy, r.seeds.size());
  }
  std::printf("summary: %s\n", (cfg.paths.runs_dir / cfg.experiment.name / "summary.csv").string().c_str());
  return 0;
}

int run_report(const Options& o) {
  const ReportFiles files = report(o.report_dir);
  std::printf("%zu summary rows written to %s\n", files.summary.size(), files.summary_csv.string().c_str());
  return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Semi-supervised training with threshold schedules and diffusion-generated unlabeled data"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON config file");
    sub->add_option("--seed", o.seed, "Seed override");
    sub->add_option("--out", o.out, "Output directory");
  };
  auto data_flags = [&](CLI::App* sub) {
    sub->add_option("--pool-kind", o.pool_kind, "real_clean, real_biased or synthetic");
    sub->add_option("--labeled-per-class", o.labeled_per_class);
    sub->add_option("--unlabeled", o.unlabeled);
    sub->add_option("--pool", o.pool, "Synthetic pool file");
  };

  auto* gen = app.add_subcommand("gen-data", "Render a dataset bundle");
  common(gen);
  data_flags(gen);

  auto* diff = app.add_subcommand("train-diffusion", "Train the noise predictor on the real unlabeled pool");
  common(diff);
  diff->add_option("--iterations", o.iterations);

  auto* smp = app.add_subcommand("sample", "Draw a synthetic pool from a trained denoiser");
  common(smp);
  smp->add_option("--checkpoint", o.checkpoint, "Denoiser checkpoint directory");
  smp->add_option("--num-samples", o.num_samples);
  smp->add_option("--batch", o.batch);

  auto* ssl = app.add_subcommand("train-ssl", "Run one semi-supervised training run");
  common(ssl);
  data_flags(ssl);
  ssl->add_option("--iterations", o.iterations);
  ssl->add_option("--schedule", o.schedule, "fixed, linear_decay, sinusoidal_decay or adaptive_ascent");
  ssl->add_option("--lambda-u", o.lambda_u);

  auto* exp = app.add_subcommand("experiment", "Run an experiment grid");
  exp->add_option("--config", o.config, "JSON config file");
  exp->add_option("--name", o.name, "ablation_thresholds, pool_comparison or baseline_vs_ssl");
  exp->add_option("--runs-dir", o.runs_dir);
  exp->add_option("--seeds", o.seeds)->delimiter(',');
  exp->add_option("--iterations", o.iterations);
  exp->add_option("--pool", o.pool, "Synthetic pool file");

  auto* rep = app.add_subcommand("report", "Summarize the completed runs of an experiment directory");
  rep->add_option("dir", o.report_dir, "runs/<experiment>")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (gen->parsed()) return gen_data(o);
    if (diff->parsed()) return train_diffusion(o);
    if (smp->parsed()) return sample(o);
    if (ssl->parsed()) return train_ssl(o);
    if (exp->parsed()) return experiment(o);
    if (rep->parsed()) return run_report(o);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace sinessl
