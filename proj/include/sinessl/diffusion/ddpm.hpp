#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sinessl/models/denoiser.hpp"
#include "sinessl/models/params.hpp"
#include "sinessl/numerics/graph.hpp"
#include "sinessl/numerics/rng.hpp"
#include "sinessl/numerics/tensor.hpp"

namespace sinessl {

/// Linear beta schedule. Steps are 1-based: beta(1) = beta_1, beta(T) = beta_T.
class DiffusionSchedule {
 public:
  explicit DiffusionSchedule(std::size_t steps = 400, double beta_1 = 1e-4, double beta_T = 0.02);

  std::size_t steps() const { return beta_.size(); }
  double beta(std::size_t t) const { return beta_[index(t)]; }
  double alpha(std::size_t t) const { return alpha_[index(t)]; }
  double alpha_bar(std::size_t t) const { return alpha_bar_[index(t)]; }
  double beta_1() const { return beta_.front(); }
  double beta_T() const { return beta_.back(); }

  nlohmann::json to_json() const;

 private:
  std::size_t index(std::size_t t) const;

  std::vector<double> beta_, alpha_, alpha_bar_;
};

/// sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.
Tensor q_sample(const Tensor& x0, std::size_t t, const Tensor& eps, const DiffusionSchedule& sched);

/// (x_t - sqrt(1 - alpha_bar_t) eps) / sqrt(alpha_bar_t).
Tensor invert_with_oracle(const Tensor& x_t, std::size_t t, const Tensor& eps, const DiffusionSchedule& sched);

/// Corrupted training batch: a step per item drawn uniformly from [1, T]
/// and standard normal noise.
struct NoisedBatch {
  Tensor x_t;
  Tensor eps;
  std::vector<std::size_t> steps;
};

/// x0: [B, ...]. Applies q_sample row by row.
NoisedBatch draw_noised(const Tensor& x0, const DiffusionSchedule& sched, Rng& rng);

/// Differentiable noise predictor evaluated on the graph.
using EpsNetwork = std::function<Var(Graph& g, Var x_t, std::span<const std::size_t> steps)>;

/// Mean over all elements of (eps - eps_hat)^2.
Var diffusion_loss(Graph& g, const EpsNetwork& net, const NoisedBatch& batch);
Var diffusion_loss(Graph& g, ModelParams& params, const DenoiserConfig& cfg, const Tensor& x0,
                   const DiffusionSchedule& sched, Rng& rng);

/// No-gradient noise prediction for a batch at per-item steps.
using EpsPredictor = std::function<Tensor(const Tensor& x_t, std::span<const std::size_t> steps)>;

EpsPredictor denoiser_predictor(const ModelParams& params, const DenoiserConfig& cfg);

struct SamplerConfig {
  std::size_t num_samples = 6000;
  std::size_t batch = 16;
  std::uint64_t seed = 0;
  /// Only "beta" (sigma_t^2 = beta_t) is supported.
  std::string sigma_mode = "beta";

  void validate() const;
};

/// Ancestral sampling from x_T ~ N(0, I), clipped to [-1, 1] at the end.
/// Batch b draws from stream (seed, b), so the pool does not depend on how
/// batches are scheduled. `sample_shape` excludes the batch axis. n = 0
/// gives an empty tensor.
Tensor ancestral_sample(const EpsPredictor& eps_hat, const DiffusionSchedule& sched, const Shape& sample_shape,
                        const SamplerConfig& cfg);

struct DenoiserTrainConfig {
  std::size_t iterations = 12000;
  std::size_t batch = 32;
  double learning_rate = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double ema_decay = 0.995;
  std::uint64_t seed = 0;
  std::size_t log_every = 250;
  DenoiserConfig model;
  std::size_t steps = 400;
  double beta_1 = 1e-4;
  double beta_T = 0.02;

  DiffusionSchedule schedule() const { return DiffusionSchedule(steps, beta_1, beta_T); }
  void validate() const;
};

void to_json(nlohmann::json& j, const DenoiserTrainConfig& c);
void from_json(const nlohmann::json& j, DenoiserTrainConfig& c);

struct DenoiserTrainResult {
  ModelParams ema;
  /// (iteration, mean loss since the previous entry).
  std::vector<std::pair<std::size_t, double>> loss_log;
};

/// Fits the noise predictor on `images` ([N, C, H, W] in [-1, 1]) and returns
/// its EMA weights.
DenoiserTrainResult train_denoiser(const DenoiserTrainConfig& cfg, const Tensor& images);

/// Writes pool_synthetic.tnsr and pool_meta.json {count, seed, schedule,
/// denoiser_checkpoint_hash} into `dir`.
void save_pool(const std::filesystem::path& dir, const Tensor& pool, const SamplerConfig& cfg,
               const DiffusionSchedule& sched, const std::string& checkpoint_hash);

}  // namespace sinessl
