#pragma once

#include <cstddef>
#include <span>

#include "json.hpp"
#include "sinessl/models/params.hpp"
#include "sinessl/numerics/graph.hpp"
#include "sinessl/numerics/rng.hpp"

namespace sinessl {

/// UNet-lite noise predictor. One conv per encoder level (mean-pool
/// downsampling), one conv per decoder level after nearest upsampling and
/// concatenation with the matching encoder features. The timestep enters as
/// a sinusoidal embedding passed through a small MLP and added per channel at
/// every level.
struct DenoiserConfig {
  std::size_t channels = 1;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t base_channels = 4;
  std::size_t depth = 3;
  std::size_t time_embed_dim = 32;
  std::size_t num_steps = 400;

  void validate() const;
  /// Feature width at encoder level k.
  std::size_t level_channels(std::size_t k) const;
};

/// Sinusoidal embedding: [2k] = sin(t w_k), [2k+1] = cos(t w_k),
/// w_k = 10000^(-2k/dim).
Tensor time_embedding(double t, std::size_t dim);

ModelParams init_denoiser(const DenoiserConfig& cfg, Rng& rng);

/// x_t: [B, channels, height, width], steps in [1, num_steps] -> eps_hat, same shape.
Var denoiser_forward(Graph& g, ModelParams& params, Var x_t, std::span<const std::size_t> steps,
                     const DenoiserConfig& cfg);

Tensor denoiser_predict(const ModelParams& params, const Tensor& x_t, std::span<const std::size_t> steps,
                        const DenoiserConfig& cfg);

void to_json(nlohmann::json& j, const DenoiserConfig& c);
void from_json(const nlohmann::json& j, DenoiserConfig& c);

}  // namespace sinessl
