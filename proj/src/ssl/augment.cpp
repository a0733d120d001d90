#include "sinessl/ssl/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "sinessl/errors.hpp"

namespace sinessl {
namespace {

struct Plane {
  std::size_t h, w;
  double at(const double* p, long y, long x) const {
    y = std::clamp<long>(y, 0, static_cast<long>(h) - 1);
    x = std::clamp<long>(x, 0, static_cast<long>(w) - 1);
    return p[y * static_cast<long>(w) + x];
  }
};

void check_sizes(std::span<const double> src, std::span<double> dst, std::size_t c, std::size_t h, std::size_t w) {
  if (src.size() != c * h * w || dst.size() != src.size()) {
    throw DimensionError("augmentation buffers do not match [" + std::to_string(c) + "," + std::to_string(h) + "," +
                         std::to_string(w) + "]");
  }
}

void clip(std::span<double> img) {
  for (double& v : img) v = std::clamp(v, -1.0, 1.0);
}

void flip_shift(std::span<const double> src, std::span<double> dst, std::size_t c, std::size_t h, std::size_t w,
                const WeakAugment& spec, Rng& rng) {
  const bool flip = rng.bernoulli(spec.flip_probability);
  const long dy = rng.integer(-spec.max_shift, spec.max_shift);
  const long dx = rng.integer(-spec.max_shift, spec.max_shift);
  const Plane plane{h, w};
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* s = src.data() + ch * h * w;
    double* d = dst.data() + ch * h * w;
    for (long y = 0; y < static_cast<long>(h); ++y) {
      for (long x = 0; x < static_cast<long>(w); ++x) {
        long sx = x - dx;
        if (flip) sx = static_cast<long>(w) - 1 - sx;
        d[y * static_cast<long>(w) + x] = plane.at(s, y - dy, sx);
      }
    }
  }
}

}  // namespace

void AugmentationSpec::validate() const {
  if (!(weak.flip_probability >= 0.0 && weak.flip_probability <= 1.0)) {
    throw ConfigError("flip probability must lie in [0, 1]");
  }
  if (weak.max_shift < 0) throw ConfigError("max_shift must be non-negative");
  if (!(strong.max_rotation_deg >= 0.0)) throw ConfigError("max_rotation_deg must be non-negative");
  if (!(strong.noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be non-negative");
  if (!(strong.contrast_low > 0.0 && strong.contrast_low <= strong.contrast_high)) {
    throw ConfigError("contrast range must satisfy 0 < low <= high");
  }
}

void weak_augment(std::span<const double> src, std::span<double> dst, std::size_t channels, std::size_t height,
                  std::size_t width, const AugmentationSpec& spec, Rng& rng) {
  check_sizes(src, dst, channels, height, width);
  flip_shift(src, dst, channels, height, width, spec.weak, rng);
  clip(dst);
}

void strong_augment(std::span<const double> src, std::span<double> dst, std::size_t channels, std::size_t height,
                    std::size_t width, const AugmentationSpec& spec, Rng& rng) {
  check_sizes(src, dst, channels, height, width);
  std::vector<double> tmp(src.size());
  flip_shift(src, tmp, channels, height, width, spec.weak, rng);

  const StrongAugment& s = spec.strong;
  const double angle = rng.uniform(-s.max_rotation_deg, s.max_rotation_deg) * std::numbers::pi / 180.0;
  const double contrast = rng.uniform(s.contrast_low, s.contrast_high);
  const double cs = std::cos(angle), sn = std::sin(angle);
  const double cy = (static_cast<double>(height) - 1.0) / 2.0, cx = (static_cast<double>(width) - 1.0) / 2.0;
  const Plane plane{height, width};
  const std::size_t hw = height * width;

  for (std::size_t ch = 0; ch < channels; ++ch) {
    const double* in = tmp.data() + ch * hw;
    double* out = dst.data() + ch * hw;
    double mean = 0.0;
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        // Inverse rotation about the centre, bilinear lookup.
        const double ry = y - cy, rx = x - cx;
        const double sy = cs * ry - sn * rx + cy;
        const double sx = sn * ry + cs * rx + cx;
        const long y0 = static_cast<long>(std::floor(sy)), x0 = static_cast<long>(std::floor(sx));
        const double fy = sy - y0, fx = sx - x0;
        const double v = (1 - fy) * ((1 - fx) * plane.at(in, y0, x0) + fx * plane.at(in, y0, x0 + 1)) +
                         fy * ((1 - fx) * plane.at(in, y0 + 1, x0) + fx * plane.at(in, y0 + 1, x0 + 1));
        out[y * width + x] = v;
        mean += v;
      }
    }
    mean /= static_cast<double>(hw);
    for (std::size_t k = 0; k < hw; ++k) out[k] = mean + contrast * (out[k] - mean);
  }
  if (s.noise_sigma > 0.0) {
    for (double& v : dst) v += s.noise_sigma * rng.normal();
  }
  if (s.cutout > 0) {
    const std::size_t ch_ = std::min(s.cutout, height), cw = std::min(s.cutout, width);
    const std::size_t top = rng.index(height - ch_ + 1), left = rng.index(width - cw + 1);
    for (std::size_t ch = 0; ch < channels; ++ch)
      for (std::size_t y = top; y < top + ch_; ++y)
        for (std::size_t x = left; x < left + cw; ++x) dst[ch * hw + y * width + x] = 0.0;
  }
  clip(dst);
}

Tensor augment_batch(const Tensor& images, std::span<const std::size_t> indices, bool strong,
                     const AugmentationSpec& spec, Rng& rng) {
  if (images.rank() != 4) throw DimensionError("augment_batch expects [N,C,H,W], got " + shape_to_string(images.shape()));
  const std::size_t n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  const std::size_t per = c * h * w;
  Tensor out({indices.size(), c, h, w});
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= n) throw IndexError("batch index " + std::to_string(indices[k]) + " out of range");
    auto src = images.data().subspan(indices[k] * per, per);
    auto dst = out.data().subspan(k * per, per);
    if (strong) {
      strong_augment(src, dst, c, h, w, spec, rng);
    } else {
      weak_augment(src, dst, c, h, w, spec, rng);
    }
  }
  return out;
}

void to_json(nlohmann::json& j, const AugmentationSpec& a) {
  j = {{"weak", {{"flip_probability", a.weak.flip_probability}, {"max_shift", a.weak.max_shift}}},
       {"strong",
        {{"max_rotation_deg", a.strong.max_rotation_deg},
         {"noise_sigma", a.strong.noise_sigma},
         {"contrast_low", a.strong.contrast_low},
         {"contrast_high", a.strong.contrast_high},
         {"cutout", a.strong.cutout}}}};
}

void from_json(const nlohmann::json& j, AugmentationSpec& a) {
  if (j.contains("weak")) {
    const auto& w = j.at("weak");
    a.weak.flip_probability = w.value("flip_probability", a.weak.flip_probability);
    a.weak.max_shift = w.value("max_shift", a.weak.max_shift);
  }
  if (j.contains("strong")) {
    const auto& s = j.at("strong");
    a.strong.max_rotation_deg = s.value("max_rotation_deg", a.strong.max_rotation_deg);
    a.strong.noise_sigma = s.value("noise_sigma", a.strong.noise_sigma);
    a.strong.contrast_low = s.value("contrast_low", a.strong.contrast_low);
    a.strong.contrast_high = s.value("contrast_high", a.strong.contrast_high);
    a.strong.cutout = s.value("cutout", a.strong.cutout);
  }
}

}  // namespace sinessl
