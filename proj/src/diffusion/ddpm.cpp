#include "sinessl/diffusion/ddpm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "sinessl/errors.hpp"
#include "sinessl/numerics/adam.hpp"
#include "sinessl/numerics/ops.hpp"
#include "sinessl/numerics/tnsr.hpp"

namespace sinessl {
namespace {

enum StreamTag : std::uint64_t { kSampleTag = 21, kDenoiserInitTag = 22, kDenoiserBatchTag = 23 };

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
}

}  // namespace

DiffusionSchedule::DiffusionSchedule(std::size_t steps, double beta_1, double beta_T) {
  if (steps < 2) throw ConfigError("diffusion needs at least 2 steps");
  if (!(beta_1 > 0.0 && beta_1 < beta_T && beta_T < 1.0)) {
    throw ConfigError("diffusion betas must satisfy 0 < beta_1 < beta_T < 1");
  }
  beta_.resize(steps);
  alpha_.resize(steps);
  alpha_bar_.resize(steps);
  double prod = 1.0;
  for (std::size_t k = 0; k < steps; ++k) {
    beta_[k] = beta_1 + (beta_T - beta_1) * static_cast<double>(k) / static_cast<double>(steps - 1);
    alpha_[k] = 1.0 - beta_[k];
    prod *= alpha_[k];
    alpha_bar_[k] = prod;
  }
}

std::size_t DiffusionSchedule::index(std::size_t t) const {
  if (t < 1 || t > beta_.size()) {
    throw IndexError("diffusion step " + std::to_string(t) + " outside [1, " + std::to_string(beta_.size()) + "]");
  }
  return t - 1;
}

nlohmann::json DiffusionSchedule::to_json() const {
  return {{"steps", steps()}, {"beta_1", beta_1()}, {"beta_T", beta_T()}, {"sigma_mode", "beta"}};
}

Tensor q_sample(const Tensor& x0, std::size_t t, const Tensor& eps, const DiffusionSchedule& sched) {
  require_same_shape(x0, eps, "q_sample shape mismatch");
  const double ab = sched.alpha_bar(t);
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

Tensor invert_with_oracle(const Tensor& x_t, std::size_t t, const Tensor& eps, const DiffusionSchedule& sched) {
  require_same_shape(x_t, eps, "invert_with_oracle shape mismatch");
  const double ab = sched.alpha_bar(t);
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  Tensor out(x_t.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = (x_t[i] - b * eps[i]) / a;
  return out;
}

NoisedBatch draw_noised(const Tensor& x0, const DiffusionSchedule& sched, Rng& rng) {
  if (x0.rank() < 1 || x0.numel() == 0) throw DimensionError("draw_noised needs a batch, got " + shape_to_string(x0.shape()));
  const std::size_t n = x0.dim(0), per = x0.numel() / n;
  NoisedBatch b{Tensor(x0.shape()), Tensor(x0.shape()), {}};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t t = 1 + rng.index(sched.steps());
    b.steps.push_back(t);
    const double ab = sched.alpha_bar(t);
    const double a = std::sqrt(ab), s = std::sqrt(1.0 - ab);
    for (std::size_t k = i * per; k < (i + 1) * per; ++k) {
      b.eps[k] = rng.normal();
      b.x_t[k] = a * x0[k] + s * b.eps[k];
    }
  }
  return b;
}

Var diffusion_loss(Graph& g, const EpsNetwork& net, const NoisedBatch& batch) {
  Var pred = net(g, g.view(batch.x_t), batch.steps);
  return ops::mse(pred, g.view(batch.eps));
}

Var diffusion_loss(Graph& g, ModelParams& params, const DenoiserConfig& cfg, const Tensor& x0,
                   const DiffusionSchedule& sched, Rng& rng) {
  if (sched.steps() != cfg.num_steps) throw ConfigError("denoiser and diffusion schedule disagree on T");
  NoisedBatch batch = draw_noised(x0, sched, rng);
  Var pred = denoiser_forward(g, params, g.constant(std::move(batch.x_t)), batch.steps, cfg);
  return ops::mse(pred, g.constant(std::move(batch.eps)));
}

EpsPredictor denoiser_predictor(const ModelParams& params, const DenoiserConfig& cfg) {
  return [&params, cfg](const Tensor& x_t, std::span<const std::size_t> steps) {
    return denoiser_predict(params, x_t, steps, cfg);
  };
}

void SamplerConfig::validate() const {
  if (batch == 0) throw ConfigError("sampler batch must be positive");
  if (sigma_mode != "beta") throw ConfigError("unsupported sigma_mode '" + sigma_mode + "' (only \"beta\")");
}

Tensor ancestral_sample(const EpsPredictor& eps_hat, const DiffusionSchedule& sched, const Shape& sample_shape,
                        const SamplerConfig& cfg) {
  cfg.validate();
  if (cfg.num_samples == 0) return Tensor();
  const std::size_t per = shape_numel(sample_shape);
  Shape full{cfg.num_samples};
  full.insert(full.end(), sample_shape.begin(), sample_shape.end());
  Tensor out(full);

  const std::size_t num_batches = (cfg.num_samples + cfg.batch - 1) / cfg.batch;
  for (std::size_t b = 0; b < num_batches; ++b) {
    const std::size_t start = b * cfg.batch;
    const std::size_t n = std::min(cfg.batch, cfg.num_samples - start);
    Rng rng(cfg.seed, stream_key(kSampleTag, b));
    Shape shape{n};
    shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
    Tensor x(shape);
    for (auto& v : x.data()) v = rng.normal();
    std::vector<std::size_t> steps(n);
    for (std::size_t t = sched.steps(); t >= 1; --t) {
      std::fill(steps.begin(), steps.end(), t);
      const Tensor e = eps_hat(x, steps);
      require_same_shape(x, e, "noise prediction shape");
      const double coef = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
      const double inv = 1.0 / std::sqrt(sched.alpha(t));
      const double sigma = t > 1 ? std::sqrt(sched.beta(t)) : 0.0;
      for (std::size_t i = 0; i < x.numel(); ++i) {
        x[i] = inv * (x[i] - coef * e[i]);
        if (t > 1) x[i] += sigma * rng.normal();
      }
    }
    for (std::size_t i = 0; i < x.numel(); ++i) out[start * per + i] = std::clamp(x[i], -1.0, 1.0);
  }
  return out;
}

void DenoiserTrainConfig::validate() const {
  if (batch == 0) throw ConfigError("denoiser batch must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("denoiser learning_rate must be positive");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ConfigError("denoiser ema_decay must lie in [0, 1)");
  if (log_every == 0) throw ConfigError("log_every must be positive");
  if (model.num_steps != steps) throw ConfigError("denoiser num_steps must equal the diffusion steps");
  model.validate();
  (void)schedule();
}

void to_json(nlohmann::json& j, const DenoiserTrainConfig& c) {
  j = {{"iterations", c.iterations}, {"batch", c.batch},         {"learning_rate", c.learning_rate},
       {"beta1", c.beta1},           {"beta2", c.beta2},         {"ema_decay", c.ema_decay},
       {"seed", c.seed},             {"log_every", c.log_every}, {"model", c.model},
       {"steps", c.steps},           {"beta_1", c.beta_1},       {"beta_T", c.beta_T}};
}

void from_json(const nlohmann::json& j, DenoiserTrainConfig& c) {
  if (!j.is_object()) throw ConfigError("diffusion config must be a JSON object");
  try {
    c.iterations = j.value("iterations", c.iterations);
    c.batch = j.value("batch", c.batch);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.ema_decay = j.value("ema_decay", c.ema_decay);
    c.seed = j.value("seed", c.seed);
    c.log_every = j.value("log_every", c.log_every);
    if (j.contains("model")) j.at("model").get_to(c.model);
    c.steps = j.value("steps", c.steps);
    c.beta_1 = j.value("beta_1", c.beta_1);
    c.beta_T = j.value("beta_T", c.beta_T);
    c.model.num_steps = c.steps;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad diffusion config: ") + e.what());
  }
}

DenoiserTrainResult train_denoiser(const DenoiserTrainConfig& cfg, const Tensor& images) {
  cfg.validate();
  if (images.rank() != 4 || images.dim(1) != cfg.model.channels || images.dim(2) != cfg.model.height ||
      images.dim(3) != cfg.model.width) {
    throw DimensionError("denoiser training images " + shape_to_string(images.shape()) + " do not match the model");
  }
  const DiffusionSchedule sched = cfg.schedule();
  Rng init(cfg.seed, stream_key(kDenoiserInitTag, 0));
  ModelParams params = init_denoiser(cfg.model, init);
  DenoiserTrainResult res{params.clone(), {}};
  AdamState opt(cfg.learning_rate, cfg.beta1, cfg.beta2);
  auto tensors = params.tensors();

  const std::size_t n = images.dim(0), per = images.numel() / n;
  Shape batch_shape = images.shape();
  batch_shape[0] = cfg.batch;
  double window = 0.0;
  std::size_t count = 0;
  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    Rng rng(cfg.seed, stream_key(kDenoiserBatchTag, it));
    Tensor x0(batch_shape);
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const std::size_t src = rng.index(n);
      std::copy_n(images.data().begin() + src * per, per, x0.data().begin() + b * per);
    }
    Graph g;
    Var loss = diffusion_loss(g, params, cfg.model, x0, sched, rng);
    window += loss.value().item();
    ++count;
    g.backward(loss);
    adam_step(tensors, opt);
    ModelParams::ema_update(res.ema, params, cfg.ema_decay);
    if (it % cfg.log_every == 0 || it == cfg.iterations) {
      res.loss_log.emplace_back(it, window / static_cast<double>(count));
      window = 0.0;
      count = 0;
    }
  }
  return res;
}

void save_pool(const std::filesystem::path& dir, const Tensor& pool, const SamplerConfig& cfg,
               const DiffusionSchedule& sched, const std::string& checkpoint_hash) {
  std::filesystem::create_directories(dir);
  save_tnsr(dir / "pool_synthetic.tnsr", pool);
  const nlohmann::json meta{{"count", pool.empty() ? 0 : pool.dim(0)},
                            {"seed", cfg.seed},
                            {"batch", cfg.batch},
                            {"schedule", sched.to_json()},
                            {"denoiser_checkpoint_hash", checkpoint_hash}};
  std::ofstream os(dir / "pool_meta.json");
  if (!os) throw IoError("cannot write " + (dir / "pool_meta.json").string());
  os << meta.dump(2) << '\n';
}

}  // namespace sinessl
