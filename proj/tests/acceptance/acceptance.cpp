// Acceptance suite. Prints one PASS/FAIL line per criterion on stdout;
// measurements and analysis go to stderr and to <workdir>/acceptance.json.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sinessl/diffusion/ddpm.hpp"
#include "sinessl/harness/config.hpp"
#include "sinessl/harness/experiment.hpp"
#include "sinessl/harness/pipeline.hpp"
#include "sinessl/harness/runtime.hpp"
#include "sinessl/schedulers/threshold.hpp"
#include "sinessl/ssl/trainer.hpp"
#include "support/gradcheck.hpp"
#include "support/suites.hpp"
#include "support/threshold_oracle.hpp"

namespace sinessl {
namespace {
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string summary;
  nlohmann::json detail = nlohmann::json::object();
};

struct Settings {
  fs::path workdir;
  std::size_t ablation_iterations = 1000;
  std::size_t pool_iterations = 500;
  std::size_t determinism_iterations = 500;
  std::size_t denoiser_iterations = 12000;
  std::size_t pool_samples = 6000;
};

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void note(const std::string& line) { std::cerr << "  " << line << std::endl; }

// --- 1 ---------------------------------------------------------------------

Outcome scheduler_exactness() {
  const auto t0 = Clock::now();
  const schedule::SinusoidalDecay s{0.95, 0.5, 0.05, 1.0};
  const std::size_t i_max = 10000;
  double max_err = 0.0;
  std::size_t outside = 0;
  for (std::size_t i = 0; i <= i_max; ++i) {
    const IterationClock clock(i, i_max);
    const double v = threshold_at(ThresholdSchedule{s}, clock);
    max_err = std::max(max_err, std::fabs(v - testing::oracle_sinusoidal(s.t_f, s.alpha, s.beta, s.omega, i, i_max)));
    const auto [lo, hi] = envelope(s, clock);
    if (v < lo || v > hi) ++outside;
  }
  const double secs = since(t0);
  Outcome o;
  o.pass = max_err <= 1e-12 && outside == 0 && secs < 1.0;
  o.summary = fmt("max |err| %.3g over 10001 points (tol 1e-12), %zu outside envelope, %.3f s (limit 1 s)", max_err,
                  outside, secs);
  o.detail = {{"max_abs_error", max_err}, {"outside_envelope", outside}, {"seconds", secs}};
  return o;
}

// --- 2 ---------------------------------------------------------------------

Outcome scheduler_boundaries() {
  const auto t0 = Clock::now();
  const schedule::SinusoidalDecay s{0.95, 0.5, 0.05, 1.0};
  const double at0 = threshold_at(ThresholdSchedule{s}, IterationClock(0, 5000));
  const double lin_end = linear_component(s.t_f, s.alpha, IterationClock(5000, 5000));
  const double lin_end_10k = linear_component(s.t_f, s.alpha, IterationClock(10000, 10000));
  const double secs = since(t0);
  Outcome o;
  o.pass = at0 == 0.95 && lin_end == 0.475 && lin_end_10k == 0.475 && secs < 1.0;
  o.summary = fmt("T(0) = %.17g, linear part at i_max = %.17g / %.17g (exact 0.95, 0.475), %.3f s", at0, lin_end,
                  lin_end_10k, secs);
  o.detail = {{"threshold_at_0", at0}, {"linear_at_imax", {lin_end, lin_end_10k}}, {"seconds", secs}};
  return o;
}

// --- 3 ---------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  std::size_t failures = 0, checks = 0;
  auto record = [&](const std::string& name, double err) {
    ++checks;
    if (err > 1e-4) ++failures;
    if (err >= worst) worst = err, worst_name = name;
  };
  std::uint64_t seed = 100;
  for (const auto& c : testing::op_cases()) {
    Rng rng(seed++, 0);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<Tensor> params;
      for (const auto& s : c.shapes) params.push_back(testing::random_tensor(s, rng));
      record(c.name, testing::grad_check(c.build, params).max_rel_error);
    }
  }
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    record("classifier", testing::classifier_grad_trial(trial).max_rel_error);
    record("denoiser", testing::denoiser_grad_trial(trial).max_rel_error);
  }
  const double secs = since(t0);
  Outcome o;
  o.pass = failures == 0 && secs < 120.0;
  o.summary = fmt("%zu ops + 2 networks x 20 trials, %zu over tol; worst rel err %.3g (%s, tol 1e-4), %.1f s (limit 120 s)",
                  testing::op_cases().size(), failures, worst, worst_name.c_str(), secs);
  o.detail = {{"checks", checks}, {"failures", failures}, {"worst", worst}, {"worst_case", worst_name}, {"seconds", secs}};
  return o;
}

// --- 4 ---------------------------------------------------------------------

Outcome ddpm_algebra() {
  const auto t0 = Clock::now();
  const DiffusionSchedule sched;
  const std::size_t T = sched.steps();
  Rng rng(41, 0);
  double max_err = 0.0;
  for (std::size_t t : {std::size_t{1}, T / 2, T}) {
    const Tensor x0 = testing::random_tensor({64, 1, 32, 32}, rng);
    const Tensor eps = testing::random_tensor({64, 1, 32, 32}, rng);
    const Tensor back = invert_with_oracle(q_sample(x0, t, eps, sched), t, eps, sched);
    for (std::size_t k = 0; k < x0.numel(); ++k) max_err = std::max(max_err, std::fabs(back[k] - x0[k]));
  }
  const std::size_t draws = 10000;
  const Tensor x0 = testing::random_tensor({draws}, rng);
  const Tensor eps = testing::random_tensor({draws}, rng);
  const Tensor xt = q_sample(x0, T, eps, sched);
  const double mean = std::accumulate(xt.data().begin(), xt.data().end(), 0.0) / draws;
  double var = 0.0;
  for (double v : xt.data()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(draws - 1);
  const double secs = since(t0);
  Outcome o;
  o.pass = max_err <= 1e-9 && std::fabs(var - 1.0) <= 0.05 && secs < 30.0;
  o.summary = fmt("inversion max |err| %.3g (tol 1e-9) at t in {1,%zu,%zu}; Var[x_T] = %.4f over 1e4 draws (1 +- 0.05), %.2f s",
                  max_err, T / 2, T, var, secs);
  o.detail = {{"inversion_max_error", max_err}, {"variance_at_T", var}, {"seconds", secs}};
  return o;
}

// --- 5 ---------------------------------------------------------------------

Outcome ddpm_sampling() {
  const auto t0 = Clock::now();
  const DiffusionSchedule sched;
  const double mu = 0.2, sd = 0.25;
  SamplerConfig cfg;
  cfg.num_samples = 2000;
  cfg.batch = 250;
  cfg.seed = 51;
  const Tensor out = ancestral_sample(testing::gaussian_oracle(sched, mu, sd), sched, {1}, cfg);
  const double mean = std::accumulate(out.data().begin(), out.data().end(), 0.0) / 2000.0;
  double sq = 0.0;
  for (double v : out.data()) sq += (v - mean) * (v - mean);
  const double sdev = std::sqrt(sq / 1999.0);
  const double secs = since(t0);
  Outcome o;
  o.pass = std::fabs(mean - mu) <= 0.05 && std::fabs(sdev - sd) <= 0.05 && secs < 60.0;
  o.summary = fmt("2000 samples: mean %.4f (target %.2f), std %.4f (target %.2f), tol 0.05, %.2f s", mean, mu, sdev, sd, secs);
  o.detail = {{"mean", mean}, {"std", sdev}, {"target_mean", mu}, {"target_std", sd}, {"seconds", secs}};
  return o;
}

// --- shared pipeline -------------------------------------------------------

ToolConfig reference_config(const Settings& s) {
  ToolConfig cfg;
  cfg.diffusion.iterations = s.denoiser_iterations;
  cfg.sampler.num_samples = s.pool_samples;
  cfg.data.unlabeled = s.pool_samples;
  cfg.paths.denoiser_dir = s.workdir / "denoiser";
  cfg.paths.pool_dir = s.workdir / "pool";
  cfg.paths.runs_dir = s.workdir / "runs";
  return cfg;
}

struct PoolInfo {
  double train_seconds = 0.0;
  double sample_seconds = 0.0;
  bool reused = false;
};

// Trains the denoiser and samples the synthetic pool once per workdir. Stage
// timings are persisted so a reused pool still counts toward the budget.
PoolInfo ensure_pool(const Settings& s) {
  const ToolConfig cfg = reference_config(s);
  const fs::path timings = s.workdir / "pool_timings.json";
  if (fs::exists(timings) && fs::exists(cfg.synthetic_pool())) {
    std::ifstream is(timings);
    const auto j = nlohmann::json::parse(is);
    if (j.at("config") == to_json(cfg)) {
      note("reusing synthetic pool " + cfg.synthetic_pool().string());
      return {j.at("train_seconds").get<double>(), j.at("sample_seconds").get<double>(), true};
    }
  }
  note(fmt("training denoiser for %zu iterations", cfg.diffusion.iterations));
  const DenoiserStage d = train_diffusion_stage(cfg, cfg.paths.denoiser_dir);
  note(fmt("denoiser: %.1f s, final loss %.5f", d.seconds, d.final_loss));
  const SampleStage smp = sample_stage(cfg, d.checkpoint, cfg.paths.pool_dir);
  note(fmt("sampled %zu images in %.1f s", smp.count, smp.seconds));
  write_json(timings, {{"config", to_json(cfg)}, {"train_seconds", d.seconds}, {"sample_seconds", smp.seconds}});
  return {d.seconds, smp.seconds, false};
}

void progress(const std::string& line) { note(line); }

// --- 6 ---------------------------------------------------------------------

Outcome ssl_gain(const Settings& s) {
  const auto t0 = Clock::now();
  const PoolInfo pool = ensure_pool(s);
  ToolConfig cfg = reference_config(s);
  cfg.data.pool_kind = PoolKind::Synthetic;
  cfg.experiment.name = "baseline_vs_ssl";
  const auto rows = run_experiment(cfg, progress);
  const auto& sup = rows.at(0);
  const auto& ssl = rows.at(1);
  const double gain = ssl.mean_accuracy - sup.mean_accuracy;
  const double secs = pool.reused ? pool.train_seconds + pool.sample_seconds + since(t0) : since(t0);
  Outcome o;
  o.pass = gain >= 0.03 && secs <= 45.0 * 60.0 && pool.train_seconds <= 20.0 * 60.0;
  o.summary = fmt("supervised %.4f +- %.4f, SSL sinusoidal %.4f +- %.4f, gain %+.2f pts (need >= 3); denoiser %.1f min "
                  "(limit 20), total %.1f min (limit 45)",
                  sup.mean_accuracy, sup.std_accuracy, ssl.mean_accuracy, ssl.std_accuracy, 100.0 * gain,
                  pool.train_seconds / 60.0, secs / 60.0);
  o.detail = {{"supervised_mean", sup.mean_accuracy}, {"supervised_std", sup.std_accuracy},
              {"ssl_mean", ssl.mean_accuracy},        {"ssl_std", ssl.std_accuracy},
              {"gain", gain},                         {"denoiser_seconds", pool.train_seconds},
              {"sample_seconds", pool.sample_seconds}, {"total_seconds", secs}};
  return o;
}

// --- 7 ---------------------------------------------------------------------

struct RunHealth {
  std::size_t runs = 0, bad = 0;
  std::vector<std::string> problems;
};

// Every metrics row has finite nonnegative losses and mask_rate in [0, 1];
// every trace row has mask_rate in [0, 1].
void check_run(const fs::path& run, RunHealth& h) {
  ++h.runs;
  bool ok = fs::exists(run / "done.marker");
  for (const auto& r : read_metrics_csv(run / "metrics.csv")) {
    ok = ok && std::isfinite(r.loss_sup) && std::isfinite(r.loss_unsup) && r.loss_sup >= 0 && r.loss_unsup >= 0 &&
         r.mask_rate >= 0 && r.mask_rate <= 1 && std::isfinite(r.test_accuracy);
  }
  std::ifstream trace(run / "trace.csv");
  std::string line;
  std::getline(trace, line);
  while (std::getline(trace, line)) {
    const double m = std::stod(line.substr(line.rfind(',') + 1));
    ok = ok && m >= 0 && m <= 1;
  }
  if (!ok) {
    ++h.bad;
    h.problems.push_back(run.string());
  }
}

Outcome ablation(const Settings& s) {
  const auto t0 = Clock::now();
  ToolConfig cfg = reference_config(s);
  cfg.experiment.name = "ablation_thresholds";
  cfg.train.iterations = s.ablation_iterations;
  cfg.train.eval_every = std::min<std::size_t>(cfg.train.eval_every, s.ablation_iterations);
  const auto rows = run_experiment(cfg, progress);
  const fs::path exp = cfg.paths.runs_dir / cfg.experiment.name;
  RunHealth h;
  for (const auto& r : expand_grid(cfg)) check_run(exp / r.cell / std::to_string(r.seed), h);

  std::vector<const SummaryRow*> order;
  for (const auto& r : rows) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->mean_accuracy > b->mean_accuracy; });
  std::string ranking;
  nlohmann::json table = nlohmann::json::array();
  for (auto* r : order) {
    ranking += (ranking.empty() ? "" : " > ") + r->cell + fmt(" %.2f+-%.2f", 100 * r->mean_accuracy, 100 * r->std_accuracy);
    table.push_back({{"cell", r->cell}, {"mean", r->mean_accuracy}, {"std", r->std_accuracy}});
  }
  const bool all_cells = rows.size() == 4 && std::all_of(rows.begin(), rows.end(), [](auto& r) { return r.seeds.size() == 3; });
  const double secs = since(t0);
  Outcome o;
  o.pass = all_cells && h.runs == 12 && h.bad == 0;
  o.summary = fmt("%zu/12 runs healthy at i_max=%zu; ranking %s; %.1f min", h.runs - h.bad, s.ablation_iterations,
                  ranking.c_str(), secs / 60.0);
  o.detail = {{"table", table}, {"unhealthy", h.problems}, {"iterations", s.ablation_iterations}, {"seconds", secs}};
  return o;
}

// --- 8 ---------------------------------------------------------------------

Outcome pool_comparison(const Settings& s) {
  const auto t0 = Clock::now();
  ensure_pool(s);
  ToolConfig cfg = reference_config(s);
  cfg.experiment.name = "pool_comparison";
  cfg.train.iterations = s.pool_iterations;
  cfg.train.eval_every = std::min<std::size_t>(cfg.train.eval_every, s.pool_iterations);
  const auto rows = run_experiment(cfg, progress);
  const fs::path exp = cfg.paths.runs_dir / cfg.experiment.name;
  RunHealth h;
  for (const auto& r : expand_grid(cfg)) check_run(exp / r.cell / std::to_string(r.seed), h);

  auto find = [&](const std::string& cell) -> const SummaryRow& {
    for (const auto& r : rows)
      if (r.cell == cell) return r;
    throw std::runtime_error("missing cell " + cell);
  };
  std::size_t violations = 0;
  std::string cells;
  nlohmann::json table = nlohmann::json::array();
  for (std::size_t n : cfg.experiment.labeled_sizes) {
    const auto& clean = find("real_clean_L" + std::to_string(n));
    const auto& biased = find("real_biased_L" + std::to_string(n));
    const auto& synth = find("synthetic_L" + std::to_string(n));
    const double noise = std::sqrt(0.5 * (clean.std_accuracy * clean.std_accuracy + biased.std_accuracy * biased.std_accuracy));
    const double excess = biased.mean_accuracy - clean.mean_accuracy;
    if (excess > 2.0 * noise) ++violations;
    cells += fmt(" L%zu: clean %.2f biased %.2f synth %.2f;", n, 100 * clean.mean_accuracy, 100 * biased.mean_accuracy,
                 100 * synth.mean_accuracy);
    table.push_back({{"labeled", n},
                     {"clean", clean.mean_accuracy},
                     {"biased", biased.mean_accuracy},
                     {"synthetic", synth.mean_accuracy},
                     {"biased_minus_clean", excess},
                     {"two_sigma", 2.0 * noise}});
  }
  const double secs = since(t0);
  Outcome o;
  o.pass = rows.size() == 12 && h.runs == 36 && h.bad == 0 && violations == 0;
  o.summary = fmt("%zu/36 runs healthy at i_max=%zu; biased above clean by > 2 sd in %zu/4 sizes;%s %.1f min",
                  h.runs - h.bad, s.pool_iterations, violations, cells.c_str(), secs / 60.0);
  o.detail = {{"table", table}, {"unhealthy", h.problems}, {"iterations", s.pool_iterations}, {"seconds", secs}};
  return o;
}

// --- 9 ---------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome determinism(const Settings& s) {
  const auto t0 = Clock::now();
  ToolConfig cfg = reference_config(s);
  cfg.train.iterations = s.determinism_iterations;
  cfg.train.eval_every = std::min<std::size_t>(cfg.train.eval_every, s.determinism_iterations);
  cfg.train.seed = 9;
  const fs::path a = s.workdir / "determinism" / "a", b = s.workdir / "determinism" / "b";
  execute_run(cfg, a);
  execute_run(cfg, b);
  const std::string ma = slurp(a / "metrics.csv"), mb = slurp(b / "metrics.csv");
  const bool same = !ma.empty() && ma == mb;
  const bool trace_same = slurp(a / "trace.csv") == slurp(b / "trace.csv");
  const double secs = since(t0);
  Outcome o;
  o.pass = same && secs < 600.0;
  o.summary = fmt("sinusoidal cell, seed 9, i_max=%zu twice: metrics.csv %s (%zu bytes), trace.csv %s, %.1f s (limit 600 s)",
                  s.determinism_iterations, same ? "identical" : "DIFFERS", ma.size(), trace_same ? "identical" : "differs",
                  secs);
  o.detail = {{"identical", same}, {"trace_identical", trace_same}, {"bytes", ma.size()}, {"seconds", secs}};
  return o;
}

// --- 10 --------------------------------------------------------------------

Outcome gating_properties() {
  const auto t0 = Clock::now();
  Rng rng(1010, 0);
  std::size_t monotone_violations = 0, tie_violations = 0, repeat_violations = 0;
  for (int n = 0; n < 10000; ++n) {
    const std::size_t k = 2 + rng.index(9);
    std::vector<double> p(k);
    double total = 0.0;
    for (auto& v : p) total += (v = -std::log(rng.uniform(1e-12, 1.0)));
    for (auto& v : p) v /= total;
    // Force a tie for the max in a quarter of the vectors.
    if (n % 4 == 0) {
      const std::size_t hi = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
      std::size_t other = rng.index(k);
      if (other == hi) other = (hi + 1) % k;
      double rest = 0.0;
      for (std::size_t i = 0; i < k; ++i)
        if (i != hi && i != other) rest += p[i];
      p[hi] = p[other] = (1.0 - rest) / 2.0;
    }
    double t1 = rng.uniform(), t2 = rng.uniform();
    if (t1 > t2) std::swap(t1, t2);
    const auto d1 = pseudo_label(p, t1), d2 = pseudo_label(p, t2);
    if (d2.accepted && !d1.accepted) ++monotone_violations;
    const double mx = *std::max_element(p.begin(), p.end());
    const std::size_t first = static_cast<std::size_t>(std::find(p.begin(), p.end(), mx) - p.begin());
    if (d1.argmax_class != first || d2.argmax_class != first) ++tie_violations;
    const auto again = pseudo_label(p, t1);
    if (again.argmax_class != d1.argmax_class || again.accepted != d1.accepted || again.max_prob != d1.max_prob) {
      ++repeat_violations;
    }
  }
  const double secs = since(t0);
  Outcome o;
  o.pass = monotone_violations == 0 && tie_violations == 0 && repeat_violations == 0 && secs < 5.0;
  o.summary = fmt("10^4 vectors: %zu monotonicity, %zu tie-break, %zu repeatability violations, %.3f s (limit 5 s)",
                  monotone_violations, tie_violations, repeat_violations, secs);
  o.detail = {{"monotonicity_violations", monotone_violations},
              {"tie_break_violations", tie_violations},
              {"repeat_violations", repeat_violations},
              {"seconds", secs}};
  return o;
}

}  // namespace
}  // namespace sinessl

int main(int argc, char** argv) {
  using namespace sinessl;
  tune_allocator();
  CLI::App app{"Acceptance criteria"};
  Settings s;
  std::string workdir = (fs::temp_directory_path() / "sinessl_acceptance").string();
  std::vector<int> only;
  bool fresh = false;
  app.add_option("--workdir", workdir, "Scratch directory for pools and runs");
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',')->check(CLI::Range(1, 10));
  app.add_flag("--fresh", fresh, "Delete the workdir first");
  app.add_option("--ablation-iterations", s.ablation_iterations);
  app.add_option("--pool-iterations", s.pool_iterations);
  app.add_option("--determinism-iterations", s.determinism_iterations);
  app.add_option("--denoiser-iterations", s.denoiser_iterations);
  app.add_option("--pool-samples", s.pool_samples);
  CLI11_PARSE(app, argc, argv);
  s.workdir = workdir;
  if (fresh) fs::remove_all(s.workdir);
  fs::create_directories(s.workdir);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"scheduler exactness", scheduler_exactness},
      {"scheduler boundary values", scheduler_boundaries},
      {"gradient suite", gradient_suite},
      {"ddpm algebra", ddpm_algebra},
      {"ddpm sampling sanity", ddpm_sampling},
      {"end-to-end ssl gain", [&] { return ssl_gain(s); }},
      {"ablation harness", [&] { return ablation(s); }},
      {"pool comparison harness", [&] { return pool_comparison(s); }},
      {"determinism", [&] { return determinism(s); }},
      {"pseudo-label gating", gating_properties},
  };
  const std::set<int> selected(only.begin(), only.end());
  // Merged with entries written by earlier invocations.
  nlohmann::json report = nlohmann::json::object();
  if (std::ifstream prev(s.workdir / "acceptance.json"); prev) {
    report = nlohmann::json::parse(prev, nullptr, false);
    if (!report.is_object()) report = nlohmann::json::object();
  }
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    std::cerr << "criterion " << id << ": " << criteria[k].first << std::endl;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.summary = std::string("error: ") + e.what();
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  [" << id << "] " << criteria[k].first << ": " << o.summary
              << std::endl;
    report[std::to_string(id)] = {{"name", criteria[k].first}, {"pass", o.pass}, {"summary", o.summary},
                                  {"detail", o.detail}};
    write_json(s.workdir / "acceptance.json", report);
  }
  return failed ? 1 : 0;
}
