#include "sinessl/harness/pipeline.hpp"

#include <chrono>
#include <fstream>

#include "sinessl/errors.hpp"

namespace sinessl {
namespace fs = std::filesystem;
namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

DenoiserStage train_diffusion_stage(const ToolConfig& cfg, const fs::path& out) {
  cfg.validate();
  BundleSpec spec = cfg.bundle_spec();
  spec.pool_kind = PoolKind::RealClean;
  const DatasetBundle b = make_bundle(spec);

  const auto t0 = std::chrono::steady_clock::now();
  const DenoiserTrainResult r = train_denoiser(cfg.diffusion, b.unlabeled.images);
  DenoiserStage stage{out / "checkpoint", b.unlabeled.size(), r.loss_log.empty() ? 0.0 : r.loss_log.back().second,
                      seconds_since(t0)};

  fs::create_directories(out);
  save_checkpoint(stage.checkpoint, r.ema, "denoiser", nlohmann::json(cfg.diffusion));
  std::ofstream loss(out / "loss.csv");
  if (!loss) throw IoError("cannot write " + (out / "loss.csv").string());
  loss << "iter,loss\n";
  for (const auto& [it, l] : r.loss_log) loss << it << ',' << l << '\n';
  write_json(out / "config.json", to_json(cfg));
  return stage;
}

SampleStage sample_stage(const ToolConfig& cfg, const fs::path& checkpoint, const fs::path& out) {
  cfg.sampler.validate();
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  if (ckpt.kind != "denoiser") throw ConfigError(checkpoint.string() + " holds a " + ckpt.kind + ", not a denoiser");
  DenoiserTrainConfig dc = cfg.diffusion;
  from_json(ckpt.config, dc);
  const DiffusionSchedule sched = dc.schedule();

  const auto t0 = std::chrono::steady_clock::now();
  const Tensor pool = ancestral_sample(denoiser_predictor(ckpt.params, dc.model), sched,
                                       {dc.model.channels, dc.model.height, dc.model.width}, cfg.sampler);
  SampleStage stage{out / "pool_synthetic.tnsr", cfg.sampler.num_samples, seconds_since(t0)};
  save_pool(out, pool, cfg.sampler, sched, checkpoint_hash(checkpoint));
  return stage;
}

}  // namespace sinessl
