#include "sinessl/harness/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "sinessl/errors.hpp"

namespace sinessl {
namespace fs = std::filesystem;
namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string join_seeds(const std::vector<std::uint64_t>& seeds) {
  std::string out;
  for (std::size_t i = 0; i < seeds.size(); ++i) out += (i ? ";" : "") + std::to_string(seeds[i]);
  return out;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  return os;
}

void run_into(const ToolConfig& run_cfg, const DatasetBundle& bundle, const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_json(dir / "config.json", to_json(run_cfg));
  const RunResult r = train_run(run_cfg.train, bundle, run_cfg.threshold_schedule(), dir);
  auto marker = open_out(dir / "done.marker");
  marker << fmt(r.final_eval.accuracy) << '\n';
}

// Cells in the order recorded at launch, or sorted directory names.
std::vector<std::string> cell_order(const fs::path& exp_dir) {
  std::vector<std::string> cells;
  const fs::path grid = exp_dir / "grid.json";
  if (fs::exists(grid)) {
    std::ifstream is(grid);
    try {
      const nlohmann::json j = nlohmann::json::parse(is);
      for (const auto& c : j.at("cells")) cells.push_back(c.get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw IoError(grid.string() + ": " + e.what());
    }
    return cells;
  }
  for (const auto& entry : fs::directory_iterator(exp_dir)) {
    if (entry.is_directory()) cells.push_back(entry.path().filename().string());
  }
  std::sort(cells.begin(), cells.end());
  return cells;
}

std::vector<std::uint64_t> completed_seeds(const fs::path& cell_dir) {
  std::vector<std::uint64_t> seeds;
  if (!fs::is_directory(cell_dir)) return seeds;
  for (const auto& entry : fs::directory_iterator(cell_dir)) {
    if (!entry.is_directory() || !fs::exists(entry.path() / "done.marker")) continue;
    try {
      seeds.push_back(std::stoull(entry.path().filename().string()));
    } catch (const std::exception&) {
      continue;
    }
  }
  std::sort(seeds.begin(), seeds.end());
  return seeds;
}

}  // namespace

std::vector<CellRun> expand_grid(const ToolConfig& cfg) {
  cfg.validate();
  const ExperimentSpec& e = cfg.experiment;
  std::vector<CellRun> runs;
  auto add_cell = [&](const std::string& cell, const ToolConfig& cell_cfg) {
    for (auto seed : e.seeds) {
      CellRun r{cell, seed, cell_cfg};
      r.config.train.seed = seed;
      runs.push_back(std::move(r));
    }
  };
  if (e.name == "ablation_thresholds") {
    std::map<std::string, int> seen;
    for (const auto& s : e.schedules) {
      ToolConfig c = cfg;
      c.schedule = s;
      std::string cell = kind_name(c.threshold_schedule());
      if (seen[cell]++) cell += "_" + std::to_string(seen[cell] - 1);
      add_cell(cell, c);
    }
  } else if (e.name == "pool_comparison") {
    for (const auto& pool : e.pools) {
      for (std::size_t n : e.labeled_sizes) {
        ToolConfig c = cfg;
        c.data.pool_kind = parse_pool_kind(pool);
        c.data.labeled_per_class = n;
        add_cell(pool + "_L" + std::to_string(n), c);
      }
    }
  } else {
    ToolConfig sup = cfg;
    sup.train.lambda_u = 0.0;
    add_cell("supervised", sup);
    add_cell("ssl_" + kind_name(cfg.threshold_schedule()), cfg);
  }
  return runs;
}

void execute_run(const ToolConfig& run_cfg, const fs::path& dir) {
  run_cfg.validate();
  run_into(run_cfg, make_bundle(run_cfg.bundle_spec()), dir);
}

std::vector<SummaryRow> run_experiment(const ToolConfig& cfg, const ProgressFn& progress) {
  const std::vector<CellRun> runs = expand_grid(cfg);
  const fs::path exp_dir = cfg.paths.runs_dir / cfg.experiment.name;
  fs::create_directories(exp_dir);
  nlohmann::json grid{{"experiment", cfg.experiment.name}, {"cells", nlohmann::json::array()},
                      {"seeds", cfg.experiment.seeds}};
  for (const auto& r : runs) {
    if (grid["cells"].empty() || grid["cells"].back() != r.cell) grid["cells"].push_back(r.cell);
  }
  write_json(exp_dir / "grid.json", grid);
  write_json(exp_dir / "config.json", to_json(cfg));

  std::map<std::string, DatasetBundle> bundles;
  for (const auto& r : runs) {
    const fs::path dir = exp_dir / r.cell / std::to_string(r.seed);
    if (fs::exists(dir / "done.marker")) {
      if (progress) progress(r.cell + " seed " + std::to_string(r.seed) + ": already complete, skipped");
      continue;
    }
    const BundleSpec spec = r.config.bundle_spec();
    const std::string key = bundle_spec_to_json(spec).dump();
    auto it = bundles.find(key);
    if (it == bundles.end()) it = bundles.emplace(key, make_bundle(spec)).first;
    const auto start = std::chrono::steady_clock::now();
    run_into(r.config, it->second, dir);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (progress) {
      progress(r.cell + " seed " + std::to_string(r.seed) + ": accuracy " + fmt(final_accuracy(dir / "metrics.csv")) +
               " (" + fmt(std::round(secs * 10) / 10) + " s)");
    }
  }
  return report(exp_dir).summary;
}

double final_accuracy(const fs::path& metrics_csv) {
  const auto rows = read_metrics_csv(metrics_csv);
  if (rows.empty()) throw IoError(metrics_csv.string() + " has no rows");
  return rows.back().test_accuracy;
}

ReportFiles report(const fs::path& exp_dir) {
  if (!fs::is_directory(exp_dir)) throw IoError("run directory " + exp_dir.string() + " does not exist");
  ReportFiles out;
  out.summary_csv = exp_dir / "summary.csv";
  out.threshold_trace_csv = exp_dir / "threshold_trace.csv";
  out.mask_rate_trace_csv = exp_dir / "mask_rate_trace.csv";

  std::string experiment = exp_dir.filename().string();
  if (experiment.empty()) experiment = exp_dir.parent_path().filename().string();
  std::ostringstream thr, mask;
  thr << "cell,seed,iter,threshold\n";
  mask << "cell,seed,iter,mask_rate\n";
  for (const auto& cell : cell_order(exp_dir)) {
    const auto seeds = completed_seeds(exp_dir / cell);
    if (seeds.empty()) continue;
    SummaryRow row{experiment, cell, 0.0, 0.0, 1.0, 0.0, seeds};
    std::vector<double> acc;
    for (auto seed : seeds) {
      const fs::path run = exp_dir / cell / std::to_string(seed);
      acc.push_back(final_accuracy(run / "metrics.csv"));
      std::ifstream trace(run / "trace.csv");
      if (!trace) throw IoError("missing " + (run / "trace.csv").string());
      std::string line;
      std::getline(trace, line);
      while (std::getline(trace, line)) {
        if (line.empty()) continue;
        const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos) {
          throw IoError((run / "trace.csv").string() + ": malformed row '" + line + "'");
        }
        thr << cell << ',' << seed << ',' << line.substr(0, c2) << '\n';
        mask << cell << ',' << seed << ',' << line.substr(0, c1) << ',' << line.substr(c2 + 1) << '\n';
      }
    }
    double mean = 0.0;
    for (double a : acc) mean += a;
    mean /= static_cast<double>(acc.size());
    double var = 0.0;
    for (double a : acc) var += (a - mean) * (a - mean);
    row.mean_accuracy = mean;
    row.std_accuracy = acc.size() > 1 ? std::sqrt(var / static_cast<double>(acc.size() - 1)) : 0.0;
    row.min_accuracy = *std::min_element(acc.begin(), acc.end());
    row.max_accuracy = *std::max_element(acc.begin(), acc.end());
    out.summary.push_back(row);
  }
  if (out.summary.empty()) throw IoError("no completed runs under " + exp_dir.string());

  auto summary = open_out(out.summary_csv);
  summary << kSummaryHeader << '\n';
  for (const auto& r : out.summary) {
    summary << r.experiment << ',' << r.cell << ',' << fmt(r.mean_accuracy) << ',' << fmt(r.std_accuracy) << ','
            << fmt(r.min_accuracy) << ',' << fmt(r.max_accuracy) << ',' << join_seeds(r.seeds) << '\n';
  }
  open_out(out.threshold_trace_csv) << thr.str();
  open_out(out.mask_rate_trace_csv) << mask.str();
  return out;
}

std::vector<SummaryRow> read_summary_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != kSummaryHeader) throw IoError(path.string() + ": unexpected header");
  std::vector<SummaryRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string part; std::getline(ss, part, ',');) f.push_back(part);
    if (f.size() != 7) throw IoError(path.string() + ": malformed row '" + line + "'");
    SummaryRow r{f[0], f[1], std::stod(f[2]), std::stod(f[3]), std::stod(f[4]), std::stod(f[5]), {}};
    std::stringstream seeds(f[6]);
    for (std::string s; std::getline(seeds, s, ';');) r.seeds.push_back(std::stoull(s));
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace sinessl
