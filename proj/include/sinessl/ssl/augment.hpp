#pragma once

#include <cstddef>
#include <span>

#include "json.hpp"
#include "sinessl/numerics/rng.hpp"
#include "sinessl/numerics/tensor.hpp"

namespace sinessl {

struct WeakAugment {
  double flip_probability = 0.5;
  /// Integer shifts drawn uniformly from [-max_shift, max_shift] per axis.
  long max_shift = 2;
};

/// Strong views apply the weak transforms first, then the extra ones below.
struct StrongAugment {
  double max_rotation_deg = 15.0;
  double noise_sigma = 0.1;
  double contrast_low = 0.5;
  double contrast_high = 1.5;
  std::size_t cutout = 8;
};

struct AugmentationSpec {
  WeakAugment weak;
  StrongAugment strong;

  void validate() const;
};

/// Image is one [C, H, W] sample; results are clipped to [-1, 1]. Pixels
/// shifted or rotated in from outside take the nearest edge value.
void weak_augment(std::span<const double> src, std::span<double> dst, std::size_t channels, std::size_t height,
                  std::size_t width, const AugmentationSpec& spec, Rng& rng);
void strong_augment(std::span<const double> src, std::span<double> dst, std::size_t channels, std::size_t height,
                    std::size_t width, const AugmentationSpec& spec, Rng& rng);

/// Gathers rows `indices` of an [N, C, H, W] stack, applying the weak or
/// strong pipeline to each.
Tensor augment_batch(const Tensor& images, std::span<const std::size_t> indices, bool strong,
                     const AugmentationSpec& spec, Rng& rng);

void to_json(nlohmann::json& j, const AugmentationSpec& a);
void from_json(const nlohmann::json& j, AugmentationSpec& a);

}  // namespace sinessl
