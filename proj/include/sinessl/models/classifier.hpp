#pragma once

#include <cstddef>
#include <vector>

#include "json.hpp"
#include "sinessl/models/params.hpp"
#include "sinessl/numerics/graph.hpp"
#include "sinessl/numerics/rng.hpp"

namespace sinessl {

/// Small residual CNN. Every stage halves the resolution with a 2x2 mean
/// pool, widens with a transition conv when the width changes, then applies
/// `blocks_per_stage` residual blocks of conv/norm/relu pairs.
struct ClassifierConfig {
  std::size_t channels = 1;
  std::size_t height = 32;
  std::size_t width = 32;
  std::vector<std::size_t> widths{8, 16, 32};
  std::size_t blocks_per_stage = 1;
  std::size_t num_classes = 3;

  void validate() const;
};

/// Upper bound on parameters for any classifier built from a config.
inline constexpr std::size_t kMaxClassifierParams = 500'000;

ModelParams init_classifier(const ClassifierConfig& cfg, Rng& rng);

/// x: [B, channels, height, width] -> logits [B, num_classes].
Var classifier_forward(Graph& g, ModelParams& params, Var x, const ClassifierConfig& cfg);

/// No-gradient logits for a batch.
Tensor classifier_logits(const ModelParams& params, const Tensor& x, const ClassifierConfig& cfg);

void to_json(nlohmann::json& j, const ClassifierConfig& c);
void from_json(const nlohmann::json& j, ClassifierConfig& c);

}  // namespace sinessl
