#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "sinessl/diffusion/ddpm.hpp"
#include "sinessl/errors.hpp"
#include "sinessl/numerics/ops.hpp"
#include "sinessl/numerics/tnsr.hpp"
#include "support/gradcheck.hpp"
#include "support/suites.hpp"

namespace sinessl {
namespace {

using testing::random_tensor;

using testing::gaussian_oracle;

TEST(Schedule, MonotoneAndProductIdentity) {
  for (auto [steps, b1, bT] : {std::tuple{400u, 1e-4, 0.02}, std::tuple{50u, 1e-3, 0.3}, std::tuple{1000u, 1e-4, 0.02}}) {
    DiffusionSchedule s(steps, b1, bT);
    EXPECT_EQ(s.beta(1), b1);
    EXPECT_NEAR(s.beta(steps), bT, 1e-15);
    double prod = 1.0;
    for (std::size_t t = 1; t <= steps; ++t) {
      prod *= s.alpha(t);
      EXPECT_NEAR(s.alpha_bar(t), prod, 1e-12);
      EXPECT_GT(s.alpha_bar(t), 0.0);
      EXPECT_LT(s.alpha_bar(t), 1.0);
      if (t > 1) {
        EXPECT_GT(s.beta(t), s.beta(t - 1));
        EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
      }
    }
  }
  EXPECT_THROW(DiffusionSchedule(400, 0.02, 1e-4), ConfigError);
}

TEST(QSample, ZeroNoiseScalesSignal) {
  DiffusionSchedule s;
  Rng rng(1, 0);
  Tensor x0 = random_tensor({2, 1, 4, 4}, rng);
  Tensor xt = q_sample(x0, 100, Tensor(x0.shape()), s);
  for (std::size_t i = 0; i < x0.numel(); ++i) EXPECT_DOUBLE_EQ(xt[i], std::sqrt(s.alpha_bar(100)) * x0[i]);
  EXPECT_THROW(q_sample(x0, 100, Tensor({2, 1, 4, 5}), s), DimensionError);
  EXPECT_THROW(q_sample(x0, 0, x0, s), IndexError);
  EXPECT_THROW(q_sample(x0, 401, x0, s), IndexError);
}

TEST(QSample, MarginalVarianceAtFinalStep) {
  DiffusionSchedule s;
  Rng rng(2, 0);
  Tensor x0 = random_tensor({10000}, rng);
  Tensor eps = random_tensor({10000}, rng);
  Tensor xt = q_sample(x0, s.steps(), eps, s);
  double mean = 0.0, sq = 0.0;
  for (double v : xt.data()) mean += v;
  mean /= 10000.0;
  for (double v : xt.data()) sq += (v - mean) * (v - mean);
  EXPECT_NEAR(sq / 9999.0, 1.0, 0.05);
}

TEST(InvertWithOracle, RoundTripAtEveryStep) {
  DiffusionSchedule s;
  Rng rng(3, 0);
  Tensor x0 = random_tensor({1, 1, 32, 32}, rng);
  Tensor eps = random_tensor({1, 1, 32, 32}, rng);
  for (std::size_t t = 1; t <= s.steps(); ++t) {
    Tensor back = invert_with_oracle(q_sample(x0, t, eps, s), t, eps, s);
    for (std::size_t i = 0; i < x0.numel(); ++i) ASSERT_NEAR(back[i], x0[i], 1e-9) << "t=" << t;
  }
  Tensor zero(x0.shape());
  Tensor div = invert_with_oracle(x0, 200, zero, s);
  for (std::size_t i = 0; i < x0.numel(); ++i) EXPECT_DOUBLE_EQ(div[i], x0[i] / std::sqrt(s.alpha_bar(200)));
  EXPECT_THROW(invert_with_oracle(x0, 0, eps, s), IndexError);
}

TEST(DiffusionLoss, OracleAndZeroPredictor) {
  DiffusionSchedule s;
  Rng rng(4, 0);
  Tensor x0 = random_tensor({10, 1, 32, 32}, rng);
  NoisedBatch batch = draw_noised(x0, s, rng);
  Graph g(false);
  Var exact = diffusion_loss(
      g, [&](Graph& gg, Var, std::span<const std::size_t>) { return gg.view(batch.eps); }, batch);
  EXPECT_EQ(exact.value().item(), 0.0);
  Var zero = diffusion_loss(
      g, [&](Graph& gg, Var x, std::span<const std::size_t>) { return gg.constant(Tensor(x.shape())); }, batch);
  EXPECT_NEAR(zero.value().item(), 1.0, 0.02);
  for (std::size_t t : batch.steps) {
    EXPECT_GE(t, 1u);
    EXPECT_LE(t, 400u);
  }
}

TEST(DiffusionLoss, DenoiserLossIsNonNegativeAndDifferentiable) {
  DenoiserConfig cfg;
  cfg.height = cfg.width = 8;
  cfg.base_channels = 3;
  cfg.time_embed_dim = 6;
  DiffusionSchedule s;
  Rng rng(5, 0);
  ModelParams p = init_denoiser(cfg, rng);
  p.set_requires_grad(true);
  Tensor x0 = random_tensor({3, 1, 8, 8}, rng);
  Graph g;
  Var loss = diffusion_loss(g, p, cfg, x0, s, rng);
  EXPECT_GE(loss.value().item(), 0.0);
  g.backward(loss);
  for (auto* t : p.tensors()) EXPECT_TRUE(t->has_grad());
}

TEST(AncestralSample, EmptyAndShapeContract) {
  DiffusionSchedule s;
  auto zero = [](const Tensor& x, std::span<const std::size_t>) { return Tensor(x.shape()); };
  SamplerConfig cfg;
  cfg.num_samples = 0;
  EXPECT_TRUE(ancestral_sample(zero, s, {1, 32, 32}, cfg).empty());
  cfg.num_samples = 5;
  cfg.batch = 2;
  Tensor out = ancestral_sample(zero, s, {1, 32, 32}, cfg);
  EXPECT_EQ(out.shape(), (Shape{5, 1, 32, 32}));
  for (double v : out.data()) ASSERT_TRUE(v >= -1.0 && v <= 1.0);
  cfg.sigma_mode = "posterior";
  EXPECT_THROW(ancestral_sample(zero, s, {1}, cfg), ConfigError);
}

TEST(AncestralSample, GaussianOracleRecoversMoments) {
  DiffusionSchedule s;
  SamplerConfig cfg;
  cfg.num_samples = 2000;
  cfg.batch = 250;
  cfg.seed = 6;
  Tensor out = ancestral_sample(gaussian_oracle(s, 0.5, 0.1), s, {1}, cfg);
  double mean = 0.0, sq = 0.0;
  for (double v : out.data()) mean += v;
  mean /= 2000.0;
  for (double v : out.data()) sq += (v - mean) * (v - mean);
  EXPECT_NEAR(mean, 0.5, 0.05);
  EXPECT_NEAR(std::sqrt(sq / 1999.0), 0.1, 0.05);
}

TEST(AncestralSample, SameSeedIsBitwiseIdentical) {
  DiffusionSchedule s(50, 1e-3, 0.2);
  DenoiserConfig dc;
  dc.height = dc.width = 8;
  dc.base_channels = 3;
  dc.time_embed_dim = 6;
  dc.num_steps = 50;
  Rng rng(7, 0);
  ModelParams p = init_denoiser(dc, rng);
  SamplerConfig cfg;
  cfg.num_samples = 6;
  cfg.batch = 4;
  cfg.seed = 9;
  Tensor a = ancestral_sample(denoiser_predictor(p, dc), s, {1, 8, 8}, cfg);
  Tensor b = ancestral_sample(denoiser_predictor(p, dc), s, {1, 8, 8}, cfg);
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST(Pool, RoundTripsAtFloatPrecision) {
  DiffusionSchedule s;
  Rng rng(8, 0);
  Tensor pool({4, 1, 32, 32});
  for (auto& v : pool.data()) v = rng.uniform(-1.0, 1.0);
  const auto dir = std::filesystem::temp_directory_path() / "sinessl_pool_test";
  std::filesystem::remove_all(dir);
  SamplerConfig cfg;
  save_pool(dir, pool, cfg, s, "abc");
  Tensor back = load_tnsr(dir / "pool_synthetic.tnsr");
  for (std::size_t i = 0; i < pool.numel(); ++i) ASSERT_EQ(back[i], static_cast<double>(static_cast<float>(pool[i])));
  EXPECT_TRUE(std::filesystem::exists(dir / "pool_meta.json"));
  std::filesystem::remove_all(dir);
}

TEST(TrainDenoiser, LossDecreasesOnTinyProblem) {
  DenoiserTrainConfig cfg;
  cfg.model.height = cfg.model.width = 8;
  cfg.model.base_channels = 4;
  cfg.model.time_embed_dim = 8;
  cfg.iterations = 300;
  cfg.batch = 16;
  cfg.log_every = 50;
  Rng rng(10, 0);
  Tensor images({64, 1, 8, 8});
  for (std::size_t i = 0; i < 64; ++i)
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x) images[i * 64 + y * 8 + x] = y < 3 ? 0.8 : -0.8;
  DenoiserTrainResult r = train_denoiser(cfg, images);
  ASSERT_GE(r.loss_log.size(), 2u);
  EXPECT_LT(r.loss_log.back().second, 0.6 * r.loss_log.front().second);
}

}  // namespace
}  // namespace sinessl
