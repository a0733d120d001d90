#pragma once

#include <filesystem>

#include "sinessl/harness/config.hpp"

namespace sinessl {

struct DenoiserStage {
  std::filesystem::path checkpoint;
  std::size_t train_images = 0;
  double final_loss = 0.0;
  double seconds = 0.0;
};

/// Fits the noise predictor on the real_clean unlabeled pool described by
/// cfg.data and writes checkpoint/, loss.csv and config.json into `out`.
DenoiserStage train_diffusion_stage(const ToolConfig& cfg, const std::filesystem::path& out);

struct SampleStage {
  std::filesystem::path pool;
  std::size_t count = 0;
  double seconds = 0.0;
};

/// Draws cfg.sampler.num_samples images from the denoiser checkpoint at
/// `checkpoint` into `out`/pool_synthetic.tnsr with its pool_meta.json.
SampleStage sample_stage(const ToolConfig& cfg, const std::filesystem::path& checkpoint,
                         const std::filesystem::path& out);

}  // namespace sinessl
