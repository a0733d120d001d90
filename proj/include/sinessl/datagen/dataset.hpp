#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sinessl/numerics/rng.hpp"
#include "sinessl/numerics/tensor.hpp"

namespace sinessl {

inline constexpr std::size_t kNumClasses = 3;
inline constexpr std::size_t kImageSize = 32;

/// Class-conditional defaults, indexed by class id.
inline constexpr std::array<double, kNumClasses> kBandThickness{8.0, 5.0, 2.0};
inline constexpr std::array<double, kNumClasses> kErosionDensity{0.02, 0.10, 0.25};

/// Latent description of one rendered image.
struct CorticalParams {
  std::size_t class_id = 0;
  /// Band height in pixels; fractional edges are drawn with partial intensity.
  double band_thickness = kBandThickness[0];
  /// Probability that a band pixel is knocked back to background.
  double erosion_noise = kErosionDensity[0];
  /// Row of the band's upper edge.
  double band_top = 12.0;
  std::uint64_t background_seed = 0;

  void validate() const;
};

/// Image-level knobs shared by every class.
struct RenderSpec {
  std::array<double, kNumClasses> erosion = kErosionDensity;
  double band_intensity = 1.0;
  double background_amplitude = 0.35;
  double pixel_noise = 0.8;
};

/// Draws the latent parameters of one sample. Thickness jitters uniformly in
/// [-1, 1] around the class mean; `upper_half` confines the band to rows
/// [0, 16).
CorticalParams draw_params(std::size_t class_id, Rng& rng, bool upper_half = false,
                           const std::array<double, kNumClasses>& erosion = kErosionDensity);

/// [1, 32, 32] image in [-1, 1]: standardized, then clamped.
Tensor render_sample(const CorticalParams& params, Rng& rng, const RenderSpec& spec = {});

/// Same scene without standardization or clamping.
Tensor render_raw(const CorticalParams& params, Rng& rng, const RenderSpec& spec = {});

enum class PoolKind { RealClean, RealBiased, Synthetic };

std::string pool_kind_name(PoolKind kind);
PoolKind parse_pool_kind(const std::string& name);

struct LabeledSplit {
  Tensor images;  // [n, 1, 32, 32]
  std::vector<std::size_t> labels;
  std::vector<std::uint64_t> ids;

  std::size_t size() const { return ids.size(); }
};

struct UnlabeledPool {
  Tensor images;
  std::vector<std::uint64_t> ids;
  PoolKind kind = PoolKind::RealClean;
  /// Generating classes for real pools, kept for diagnostics only.
  std::vector<std::size_t> latent_classes;

  std::size_t size() const { return ids.size(); }
};

struct BundleSpec {
  std::size_t labeled_per_class = 10;
  std::size_t unlabeled = 6000;
  std::size_t test_per_class = 200;
  PoolKind pool_kind = PoolKind::RealClean;
  /// Class proportions of the biased pool.
  std::array<double, kNumClasses> bias{0.7, 0.2, 0.1};
  std::uint64_t seed = 0;
  /// Stacked images for the synthetic pool.
  std::filesystem::path synthetic_pool;
  RenderSpec render;

  void validate() const;
};

struct DatasetBundle {
  LabeledSplit labeled;
  UnlabeledPool unlabeled;
  LabeledSplit test;
  std::size_t num_classes = kNumClasses;
  nlohmann::json meta;
};

/// Pure function of the spec (and the pool file for synthetic pools).
/// Every sample renders from its own stream, so a smaller labeled set is a
/// per-class prefix of a larger one under the same seed.
DatasetBundle make_bundle(const BundleSpec& spec);

/// Throws ConfigError naming the first id shared by two splits.
void check_disjoint(const DatasetBundle& bundle);

struct SeparabilityReport {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
};

/// Estimated band thickness: the number of rows whose mean exceeds the
/// midpoint between the image's median row mean and its brightest row mean.
double estimate_thickness(const Tensor& images, std::size_t index);

/// Hand-coded thickness classifier; cut points sit halfway between the class
/// means.
std::size_t hand_classify(double thickness);

/// Hand classifier accuracy on the test split.
SeparabilityReport bayes_gap_check(const DatasetBundle& bundle);

/// Writes labeled/unlabeled/test ".tnsr" stacks, `id,class` CSVs and
/// bundle_meta.json.
void save_bundle(const std::filesystem::path& dir, const DatasetBundle& bundle);
DatasetBundle load_bundle(const std::filesystem::path& dir);

nlohmann::json bundle_spec_to_json(const BundleSpec& spec);
/// Keys: labeled_per_class, unlabeled, test_per_class, pool_kind, bias,
/// seed, synthetic_pool, render{erosion, band_intensity,
/// background_amplitude, pixel_noise}. Missing keys keep the values already in `base`.
BundleSpec bundle_spec_from_json(const nlohmann::json& j, BundleSpec base = {});

}  // namespace sinessl
