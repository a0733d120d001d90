#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "sinessl/datagen/dataset.hpp"
#include "sinessl/diffusion/ddpm.hpp"
#include "sinessl/schedulers/threshold.hpp"
#include "sinessl/ssl/trainer.hpp"

namespace sinessl {

struct ExperimentSpec {
  std::string name = "ablation_thresholds";
  std::vector<std::uint64_t> seeds{1, 2, 3};
  /// Labeled images per class for the cells of pool_comparison.
  std::vector<std::size_t> labeled_sizes{30, 21, 15, 6};
  std::vector<std::string> pools{"real_clean", "real_biased", "synthetic"};
  /// Schedule configs for ablation_thresholds, in row order.
  std::vector<nlohmann::json> schedules{
      {{"kind", "fixed"}}, {{"kind", "adaptive_ascent"}}, {{"kind", "linear_decay"}}, {{"kind", "sinusoidal_decay"}}};
};

struct PathConfig {
  std::filesystem::path data_dir = "data";
  std::filesystem::path denoiser_dir = "denoiser";
  std::filesystem::path pool_dir = "pool";
  std::filesystem::path runs_dir = "runs";
};

/// Everything the tool reads. JSON sections: data, train, schedule,
/// diffusion, sampler, experiment, paths.
struct ToolConfig {
  BundleSpec data;
  TrainConfig train;
  nlohmann::json schedule = {{"kind", "sinusoidal_decay"}};
  DenoiserTrainConfig diffusion;
  SamplerConfig sampler;
  ExperimentSpec experiment;
  PathConfig paths;

  ThresholdSchedule threshold_schedule() const;
  /// data.synthetic_pool, or pool_dir/pool_synthetic.tnsr when unset.
  std::filesystem::path synthetic_pool() const;
  /// Bundle spec with the synthetic pool path resolved.
  BundleSpec bundle_spec() const;
  void validate() const;
};

/// Overlays the sections present in `j` onto `cfg`.
void apply_json(ToolConfig& cfg, const nlohmann::json& j);
nlohmann::json to_json(const ToolConfig& cfg);

/// Throws ConfigError naming the path when it is missing or unparsable.
ToolConfig load_config(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace sinessl
