#include "sinessl/harness/config.hpp"

#include <fstream>

#include "sinessl/errors.hpp"

namespace sinessl {
namespace {

const std::vector<std::string> kExperiments{"ablation_thresholds", "pool_comparison", "baseline_vs_ssl"};

}  // namespace

ThresholdSchedule ToolConfig::threshold_schedule() const {
  return schedule_from_json(schedule, train.model.num_classes);
}

std::filesystem::path ToolConfig::synthetic_pool() const {
  return data.synthetic_pool.empty() ? paths.pool_dir / "pool_synthetic.tnsr" : data.synthetic_pool;
}

BundleSpec ToolConfig::bundle_spec() const {
  BundleSpec s = data;
  s.synthetic_pool = synthetic_pool();
  return s;
}

void ToolConfig::validate() const {
  data.validate();
  train.validate();
  (void)threshold_schedule();
  diffusion.validate();
  sampler.validate();
  if (std::find(kExperiments.begin(), kExperiments.end(), experiment.name) == kExperiments.end()) {
    throw ConfigError("unknown experiment '" + experiment.name +
                      "' (expected ablation_thresholds, pool_comparison or baseline_vs_ssl)");
  }
  if (experiment.seeds.empty()) throw ConfigError("experiment needs at least one seed");
  for (std::size_t n : experiment.labeled_sizes) {
    if (n == 0) throw ConfigError("labeled sizes must be positive");
  }
  for (const auto& p : experiment.pools) (void)parse_pool_kind(p);
  for (const auto& s : experiment.schedules) (void)schedule_from_json(s, train.model.num_classes);
}

void apply_json(ToolConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::vector<std::string> sections{"data",    "train",      "schedule", "diffusion",
                                                 "sampler", "experiment", "paths"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(sections.begin(), sections.end(), key) == sections.end()) {
      throw ConfigError("unknown config section '" + key + "'");
    }
  }
  try {
    if (j.contains("data")) cfg.data = bundle_spec_from_json(j.at("data"), cfg.data);
    if (j.contains("train")) from_json(j.at("train"), cfg.train);
    if (j.contains("schedule")) {
      const auto& s = j.at("schedule");
      if (!s.is_object()) throw ConfigError("schedule must be a JSON object");
      nlohmann::json merged = s.contains("kind") && s.at("kind") != cfg.schedule.value("kind", "")
                                  ? nlohmann::json::object()
                                  : cfg.schedule;
      merged.update(s);
      cfg.schedule = merged;
    }
    if (j.contains("diffusion")) from_json(j.at("diffusion"), cfg.diffusion);
    if (j.contains("sampler")) {
      const auto& s = j.at("sampler");
      cfg.sampler.num_samples = s.value("num_samples", cfg.sampler.num_samples);
      cfg.sampler.batch = s.value("batch", cfg.sampler.batch);
      cfg.sampler.seed = s.value("seed", cfg.sampler.seed);
      cfg.sampler.sigma_mode = s.value("sigma_mode", cfg.sampler.sigma_mode);
    }
    if (j.contains("experiment")) {
      const auto& e = j.at("experiment");
      cfg.experiment.name = e.value("name", cfg.experiment.name);
      cfg.experiment.seeds = e.value("seeds", cfg.experiment.seeds);
      cfg.experiment.labeled_sizes = e.value("labeled_sizes", cfg.experiment.labeled_sizes);
      cfg.experiment.pools = e.value("pools", cfg.experiment.pools);
      if (e.contains("schedules")) cfg.experiment.schedules = e.at("schedules").get<std::vector<nlohmann::json>>();
    }
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      cfg.paths.data_dir = p.value("data_dir", cfg.paths.data_dir.string());
      cfg.paths.denoiser_dir = p.value("denoiser_dir", cfg.paths.denoiser_dir.string());
      cfg.paths.pool_dir = p.value("pool_dir", cfg.paths.pool_dir.string());
      cfg.paths.runs_dir = p.value("runs_dir", cfg.paths.runs_dir.string());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  }
}

nlohmann::json to_json(const ToolConfig& cfg) {
  nlohmann::json diffusion = cfg.diffusion;
  return {{"data", bundle_spec_to_json(cfg.data)},
          {"train", cfg.train},
          {"schedule", schedule_to_json(cfg.threshold_schedule())},
          {"diffusion", diffusion},
          {"sampler",
           {{"num_samples", cfg.sampler.num_samples},
            {"batch", cfg.sampler.batch},
            {"seed", cfg.sampler.seed},
            {"sigma_mode", cfg.sampler.sigma_mode}}},
          {"experiment",
           {{"name", cfg.experiment.name},
            {"seeds", cfg.experiment.seeds},
            {"labeled_sizes", cfg.experiment.labeled_sizes},
            {"pools", cfg.experiment.pools},
            {"schedules", cfg.experiment.schedules}}},
          {"paths",
           {{"data_dir", cfg.paths.data_dir.string()},
            {"denoiser_dir", cfg.paths.denoiser_dir.string()},
            {"pool_dir", cfg.paths.pool_dir.string()},
            {"runs_dir", cfg.paths.runs_dir.string()}}}};
}

ToolConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  ToolConfig cfg;
  apply_json(cfg, j);
  return cfg;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

}  // namespace sinessl
