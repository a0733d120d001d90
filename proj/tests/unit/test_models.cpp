#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "sinessl/errors.hpp"
#include "sinessl/models/classifier.hpp"
#include "sinessl/models/denoiser.hpp"
#include "sinessl/models/params.hpp"
#include "sinessl/numerics/ops.hpp"
#include "support/gradcheck.hpp"
#include "support/suites.hpp"

namespace sinessl {
namespace {

using testing::random_tensor;

using testing::tiny_classifier;
using testing::tiny_denoiser;

TEST(Classifier, LogitShape) {
  Rng rng(1, 0);
  ClassifierConfig cfg;
  ModelParams p = init_classifier(cfg, rng);
  Tensor logits = classifier_logits(p, random_tensor({2, 1, 32, 32}, rng), cfg);
  EXPECT_EQ(logits.shape(), (Shape{2, 3}));
}

TEST(Classifier, DuplicateRowsGiveIdenticalLogits) {
  Rng rng(2, 0);
  ClassifierConfig cfg;
  ModelParams p = init_classifier(cfg, rng);
  Tensor one = random_tensor({1, 1, 32, 32}, rng);
  Tensor other = random_tensor({1, 1, 32, 32}, rng);
  Tensor batch({3, 1, 32, 32});
  for (std::size_t i = 0; i < 1024; ++i) {
    batch[i] = one[i];
    batch[1024 + i] = other[i];
    batch[2048 + i] = one[i];
  }
  Tensor logits = classifier_logits(p, batch, cfg);
  Tensor alone = classifier_logits(p, one, cfg);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(logits[k], logits[6 + k]);
    EXPECT_EQ(logits[k], alone[k]);
  }
}

TEST(Classifier, ZeroHeadGivesZeroLogits) {
  Rng rng(3, 0);
  ClassifierConfig cfg;
  ModelParams p = init_classifier(cfg, rng);
  for (auto& v : p.at("head/weight").data()) v = 0.0;
  for (auto& v : p.at("head/bias").data()) v = 0.0;
  Tensor logits = classifier_logits(p, random_tensor({4, 1, 32, 32}, rng), cfg);
  for (double v : logits.data()) EXPECT_EQ(v, 0.0);
}

TEST(Classifier, RepeatedForwardIsBitwiseEqual) {
  Rng rng(4, 0);
  ClassifierConfig cfg;
  ModelParams p = init_classifier(cfg, rng);
  Tensor x = random_tensor({5, 1, 32, 32}, rng);
  Tensor a = classifier_logits(p, x, cfg);
  Tensor b = classifier_logits(p, x, cfg);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Classifier, ParameterBudget) {
  Rng rng(5, 0);
  ClassifierConfig cfg;
  EXPECT_LT(init_classifier(cfg, rng).parameter_count(), kMaxClassifierParams);
  cfg.widths = {16, 32, 64};
  cfg.blocks_per_stage = 2;
  EXPECT_LT(init_classifier(cfg, rng).parameter_count(), kMaxClassifierParams);
  cfg.widths = {256, 256};
  EXPECT_THROW(init_classifier(cfg, rng), ConfigError);
}

TEST(Classifier, WrongInputShapeIsDimensionError) {
  Rng rng(6, 0);
  ClassifierConfig cfg;
  ModelParams p = init_classifier(cfg, rng);
  EXPECT_THROW(classifier_logits(p, Tensor({2, 1, 16, 16}), cfg), DimensionError);
}

TEST(Classifier, GradientMatchesFiniteDifferences) {
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    EXPECT_LE(testing::classifier_grad_trial(trial).max_rel_error, 1e-4) << "trial " << trial;
  }
}

TEST(TimeEmbedding, ZeroStepAlternates) {
  Tensor e = time_embedding(0, 8);
  for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(e[k], k % 2 == 0 ? 0.0 : 1.0);
}

TEST(TimeEmbedding, FourDimAtStepOne) {
  Tensor e = time_embedding(1, 4);
  // sin/cos of 1 and 1/100 to 17 digits.
  EXPECT_NEAR(e[0], 0.84147098480789651, 1e-15);
  EXPECT_NEAR(e[1], 0.54030230586813972, 1e-15);
  EXPECT_NEAR(e[2], 0.0099998333341666645, 1e-15);
  EXPECT_NEAR(e[3], 0.99995000041666526, 1e-15);
}

TEST(TimeEmbedding, BoundedAndOddDimRejected) {
  for (double t : {1.0, 17.0, 399.0}) {
    Tensor e = time_embedding(t, 32);
    for (double v : e.data()) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
  }
  EXPECT_THROW(time_embedding(3, 5), ContractError);
}

TEST(Denoiser, OutputShapeMatchesInput) {
  Rng rng(7, 0);
  DenoiserConfig cfg;
  ModelParams p = init_denoiser(cfg, rng);
  const std::vector<std::size_t> steps{10};
  Tensor out = denoiser_predict(p, random_tensor({1, 1, 32, 32}, rng), steps, cfg);
  EXPECT_EQ(out.shape(), (Shape{1, 1, 32, 32}));
}

TEST(Denoiser, TimeConditioningIsLive) {
  Rng rng(8, 0);
  DenoiserConfig cfg;
  ModelParams p = init_denoiser(cfg, rng);
  Tensor x = random_tensor({1, 1, 32, 32}, rng);
  const std::vector<std::size_t> t1{5}, t2{300};
  Tensor a = denoiser_predict(p, x, t1, cfg);
  Tensor b = denoiser_predict(p, x, t2, cfg);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) diff = std::max(diff, std::fabs(a[i] - b[i]));
  EXPECT_GT(diff, 1e-9);
}

TEST(Denoiser, StepOutOfRangeIsIndexError) {
  Rng rng(9, 0);
  DenoiserConfig cfg = tiny_denoiser();
  ModelParams p = init_denoiser(cfg, rng);
  Tensor x({1, 1, 8, 8});
  const std::vector<std::size_t> zero{0}, past{51};
  EXPECT_THROW(denoiser_predict(p, x, zero, cfg), IndexError);
  EXPECT_THROW(denoiser_predict(p, x, past, cfg), IndexError);
}

TEST(Denoiser, FiniteOnLargeInputs) {
  Rng rng(10, 0);
  DenoiserConfig cfg;
  ModelParams p = init_denoiser(cfg, rng);
  Tensor x({2, 1, 32, 32});
  for (auto& v : x.data()) v = rng.uniform(-10.0, 10.0);
  const std::vector<std::size_t> steps{1, 400};
  EXPECT_TRUE(denoiser_predict(p, x, steps, cfg).all_finite());
}

TEST(Denoiser, GradientMatchesFiniteDifferences) {
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    EXPECT_LE(testing::denoiser_grad_trial(trial).max_rel_error, 1e-4) << "trial " << trial;
  }
}

TEST(Checkpoint, RoundTripsAtFloatPrecision) {
  Rng rng(11, 0);
  ClassifierConfig cfg;
  ModelParams p = init_classifier(cfg, rng);
  const auto dir = std::filesystem::temp_directory_path() / "sinessl_ckpt_test";
  std::filesystem::remove_all(dir);
  nlohmann::json jc = cfg;
  save_checkpoint(dir, p, "classifier", jc);
  Checkpoint back = load_checkpoint(dir);
  EXPECT_EQ(back.kind, "classifier");
  EXPECT_EQ(back.config.get<ClassifierConfig>().widths, cfg.widths);
  ASSERT_EQ(back.params.paths(), p.paths());
  for (const auto& [path, t] : p) {
    const Tensor& u = back.params.at(path);
    for (std::size_t i = 0; i < t.numel(); ++i) EXPECT_EQ(u[i], static_cast<double>(static_cast<float>(t[i])));
  }
  EXPECT_EQ(checkpoint_hash(dir), checkpoint_hash(dir));
  std::filesystem::remove_all(dir);
}

TEST(ModelParams, DuplicatePathRejectedAndEmaBlends) {
  ModelParams a, b;
  a.add("w", Tensor({2}, 1.0));
  EXPECT_THROW(a.add("w", Tensor({2})), ContractError);
  b.add("w", Tensor({2}, 3.0));
  ModelParams::ema_update(a, b, 0.75);
  EXPECT_DOUBLE_EQ(a.at("w")[0], 1.5);
}

}  // namespace
}  // namespace sinessl
