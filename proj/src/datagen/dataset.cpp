#include "sinessl/datagen/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "sinessl/errors.hpp"
#include "sinessl/numerics/tnsr.hpp"

namespace sinessl {
namespace {

constexpr std::size_t kPixels = kImageSize * kImageSize;

constexpr std::uint64_t kLabeledBase = 1'000'000'000;
constexpr std::uint64_t kUnlabeledBase = 2'000'000'000;
constexpr std::uint64_t kTestBase = 3'000'000'000;
constexpr std::uint64_t kClassStride = 1'000'000;

enum StreamTag : std::uint64_t { kLabeledTag = 1, kCleanTag = 2, kBiasedTag = 3, kTestTag = 4 };

void render_into(const CorticalParams& p, Rng& rng, const RenderSpec& spec, std::span<double> out) {
  p.validate();
  Rng bg(p.background_seed, 0);
  struct Wave {
    double fy, fx, phase, amp;
  };
  std::array<Wave, 3> waves{};
  for (auto& w : waves) {
    const double freq = bg.uniform(0.5, 2.0) * 2.0 * std::numbers::pi / static_cast<double>(kImageSize);
    const double angle = bg.uniform(0.0, std::numbers::pi);
    w = Wave{freq * std::sin(angle), freq * std::cos(angle), bg.uniform(0.0, 2.0 * std::numbers::pi),
             bg.uniform(0.5, 1.0)};
  }
  const double bottom = p.band_top + p.band_thickness;
  for (std::size_t y = 0; y < kImageSize; ++y) {
    const double coverage = std::max(0.0, std::min(bottom, y + 1.0) - std::max(p.band_top, static_cast<double>(y)));
    for (std::size_t x = 0; x < kImageSize; ++x) {
      double v = 0.0;
      for (const auto& w : waves) v += w.amp * std::sin(w.fy * y + w.fx * x + w.phase);
      v *= spec.background_amplitude / static_cast<double>(waves.size());
      if (coverage > 0.0 && !rng.bernoulli(p.erosion_noise)) v += spec.band_intensity * coverage;
      if (spec.pixel_noise > 0.0) v += spec.pixel_noise * rng.normal();
      out[y * kImageSize + x] = v;
    }
  }
}

void standardize_clamp(std::span<double> img) {
  double mean = 0.0;
  for (double v : img) mean += v;
  mean /= static_cast<double>(img.size());
  double var = 0.0;
  for (double v : img) var += (v - mean) * (v - mean);
  const double sd = std::max(std::sqrt(var / static_cast<double>(img.size())), 1e-8);
  for (double& v : img) v = std::clamp((v - mean) / sd, -1.0, 1.0);
}

std::span<double> slot(Tensor& stack, std::size_t i) { return stack.data().subspan(i * kPixels, kPixels); }

void render_to(Tensor& stack, std::size_t i, const CorticalParams& p, Rng& rng, const RenderSpec& spec) {
  auto dst = slot(stack, i);
  render_into(p, rng, spec, dst);
  standardize_clamp(dst);
}

LabeledSplit balanced_split(std::size_t per_class, std::uint64_t seed, StreamTag tag, std::uint64_t id_base,
                            const RenderSpec& spec) {
  LabeledSplit s;
  s.images = Tensor({per_class * kNumClasses, 1, kImageSize, kImageSize});
  std::size_t row = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    for (std::size_t k = 0; k < per_class; ++k, ++row) {
      const std::uint64_t local = c * kClassStride + k;
      Rng rng(seed, stream_key(tag, local));
      CorticalParams p = draw_params(c, rng, false, spec.erosion);
      render_to(s.images, row, p, rng, spec);
      s.labels.push_back(c);
      s.ids.push_back(id_base + local);
    }
  }
  return s;
}

std::size_t draw_class(Rng& rng, const std::array<double, kNumClasses>& probs) {
  double u = rng.uniform();
  for (std::size_t c = 0; c + 1 < kNumClasses; ++c) {
    if (u < probs[c]) return c;
    u -= probs[c];
  }
  return kNumClasses - 1;
}

void write_label_csv(const std::filesystem::path& path, const std::vector<std::uint64_t>& ids,
                     const std::vector<std::size_t>* labels) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << (labels ? "id,class\n" : "id\n");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    os << ids[i];
    if (labels) os << ',' << (*labels)[i];
    os << '\n';
  }
}

void read_label_csv(const std::filesystem::path& path, std::vector<std::uint64_t>& ids,
                    std::vector<std::size_t>* labels) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::uint64_t id = 0;
    char comma = 0;
    std::size_t cls = 0;
    row >> id;
    if (labels) row >> comma >> cls;
    if (!row || (labels && comma != ',')) throw IoError(path.string() + ": malformed row '" + line + "'");
    ids.push_back(id);
    if (labels) labels->push_back(cls);
  }
}

}  // namespace

void CorticalParams::validate() const {
  if (class_id >= kNumClasses) throw ContractError("class id " + std::to_string(class_id) + " out of range");
  if (!(band_thickness >= 1.0)) throw ContractError("band thickness must be at least 1 pixel");
  if (!(erosion_noise >= 0.0 && erosion_noise <= 1.0)) throw ContractError("erosion density must lie in [0, 1]");
  if (band_top < 0.0 || band_top + band_thickness > static_cast<double>(kImageSize)) {
    throw ContractError("band rows fall outside the image");
  }
}

CorticalParams draw_params(std::size_t class_id, Rng& rng, bool upper_half,
                           const std::array<double, kNumClasses>& erosion) {
  if (class_id >= kNumClasses) throw ContractError("class id " + std::to_string(class_id) + " out of range");
  CorticalParams p;
  p.class_id = class_id;
  p.band_thickness = kBandThickness[class_id] + rng.uniform(-1.0, 1.0);
  p.erosion_noise = erosion[class_id];
  const double limit = upper_half ? kImageSize / 2.0 : kImageSize - 2.0;
  p.band_top = rng.uniform(upper_half ? 1.0 : 2.0, limit - p.band_thickness);
  p.background_seed = rng.engine()();
  return p;
}

Tensor render_raw(const CorticalParams& params, Rng& rng, const RenderSpec& spec) {
  Tensor img({1, kImageSize, kImageSize});
  render_into(params, rng, spec, img.data());
  return img;
}

Tensor render_sample(const CorticalParams& params, Rng& rng, const RenderSpec& spec) {
  Tensor img = render_raw(params, rng, spec);
  standardize_clamp(img.data());
  return img;
}

std::string pool_kind_name(PoolKind kind) {
  switch (kind) {
    case PoolKind::RealClean: return "real_clean";
    case PoolKind::RealBiased: return "real_biased";
    case PoolKind::Synthetic: return "synthetic";
  }
  return "unknown";
}

PoolKind parse_pool_kind(const std::string& name) {
  if (name == "real_clean") return PoolKind::RealClean;
  if (name == "real_biased") return PoolKind::RealBiased;
  if (name == "synthetic") return PoolKind::Synthetic;
  throw ConfigError("unknown pool kind '" + name + "'");
}

void BundleSpec::validate() const {
  if (labeled_per_class == 0 || unlabeled == 0 || test_per_class == 0) {
    throw ConfigError("bundle counts must be positive");
  }
  if (labeled_per_class >= kClassStride || test_per_class >= kClassStride || unlabeled >= kUnlabeledBase) {
    throw ConfigError("bundle counts too large");
  }
  double total = 0.0;
  for (double b : bias) {
    if (!(b >= 0.0)) throw ConfigError("bias proportions must be non-negative");
    total += b;
  }
  if (std::fabs(total - 1.0) > 1e-9) throw ConfigError("bias proportions must sum to 1");
  for (double e : render.erosion) {
    if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("erosion densities must lie in [0, 1]");
  }
  if (!(render.pixel_noise >= 0.0 && render.background_amplitude >= 0.0)) {
    throw ConfigError("render noise levels must be non-negative");
  }
}

DatasetBundle make_bundle(const BundleSpec& spec) {
  spec.validate();
  DatasetBundle b;
  b.labeled = balanced_split(spec.labeled_per_class, spec.seed, kLabeledTag, kLabeledBase, spec.render);
  b.test = balanced_split(spec.test_per_class, spec.seed, kTestTag, kTestBase, spec.render);

  UnlabeledPool& u = b.unlabeled;
  u.kind = spec.pool_kind;
  if (spec.pool_kind == PoolKind::Synthetic) {
    if (!std::filesystem::exists(spec.synthetic_pool)) {
      throw IoError("synthetic pool file not found: " + spec.synthetic_pool.string() +
                    " (generate it with the `sample` subcommand)");
    }
    Tensor pool = load_tnsr(spec.synthetic_pool);
    if (pool.rank() != 4 || pool.dim(1) != 1 || pool.dim(2) != kImageSize || pool.dim(3) != kImageSize) {
      throw IoError(spec.synthetic_pool.string() + ": expected [N,1,32,32], got " + shape_to_string(pool.shape()));
    }
    if (pool.dim(0) < spec.unlabeled) {
      throw IoError(spec.synthetic_pool.string() + " holds " + std::to_string(pool.dim(0)) + " images, " +
                    std::to_string(spec.unlabeled) + " requested");
    }
    std::vector<double> head(pool.data().begin(), pool.data().begin() + spec.unlabeled * kPixels);
    u.images = Tensor({spec.unlabeled, 1, kImageSize, kImageSize}, std::move(head));
  } else {
    const bool biased = spec.pool_kind == PoolKind::RealBiased;
    const std::array<double, kNumClasses> uniform{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    u.images = Tensor({spec.unlabeled, 1, kImageSize, kImageSize});
    for (std::size_t k = 0; k < spec.unlabeled; ++k) {
      Rng rng(spec.seed, stream_key(biased ? kBiasedTag : kCleanTag, k));
      const std::size_t c = draw_class(rng, biased ? spec.bias : uniform);
      CorticalParams p = draw_params(c, rng, biased, spec.render.erosion);
      render_to(u.images, k, p, rng, spec.render);
      u.latent_classes.push_back(c);
    }
  }
  for (std::size_t k = 0; k < spec.unlabeled; ++k) u.ids.push_back(kUnlabeledBase + k);

  b.meta = {{"counts",
             {{"labeled", b.labeled.size()}, {"unlabeled", b.unlabeled.size()}, {"test", b.test.size()}}},
            {"seed", spec.seed},
            {"pool_kind", pool_kind_name(spec.pool_kind)},
            {"bias_spec", spec.bias},
            {"spec", bundle_spec_to_json(spec)}};
  return b;
}

void check_disjoint(const DatasetBundle& bundle) {
  std::vector<std::pair<std::uint64_t, const char*>> all;
  for (auto id : bundle.labeled.ids) all.emplace_back(id, "labeled");
  for (auto id : bundle.unlabeled.ids) all.emplace_back(id, "unlabeled");
  for (auto id : bundle.test.ids) all.emplace_back(id, "test");
  std::sort(all.begin(), all.end());
  for (std::size_t i = 1; i < all.size(); ++i) {
    if (all[i].first == all[i - 1].first) {
      throw ConfigError("sample id " + std::to_string(all[i].first) + " appears in both " + all[i - 1].second +
                        " and " + all[i].second + " splits");
    }
  }
}

double estimate_thickness(const Tensor& images, std::size_t index) {
  if (images.numel() < (index + 1) * kPixels) throw IndexError("image index out of range");
  const double* img = images.data().data() + index * kPixels;
  std::array<double, kImageSize> rows{};
  for (std::size_t y = 0; y < kImageSize; ++y) {
    double s = 0.0;
    for (std::size_t x = 0; x < kImageSize; ++x) s += img[y * kImageSize + x];
    rows[y] = s / kImageSize;
  }
  std::array<double, kImageSize> sorted = rows;
  std::nth_element(sorted.begin(), sorted.begin() + kImageSize / 2, sorted.end());
  const double median = sorted[kImageSize / 2];
  const auto peak = std::max_element(rows.begin(), rows.end());
  const double cut = 0.5 * (median + *peak);
  const std::size_t top = static_cast<std::size_t>(peak - rows.begin());
  std::size_t count = 1;
  for (std::size_t y = top; y-- > 0 && rows[y] > cut;) ++count;
  for (std::size_t y = top + 1; y < kImageSize && rows[y] > cut; ++y) ++count;
  return static_cast<double>(count);
}

std::size_t hand_classify(double thickness) {
  if (thickness >= 0.5 * (kBandThickness[0] + kBandThickness[1])) return 0;
  if (thickness >= 0.5 * (kBandThickness[1] + kBandThickness[2])) return 1;
  return 2;
}

SeparabilityReport bayes_gap_check(const DatasetBundle& bundle) {
  const LabeledSplit& test = bundle.test;
  if (test.size() == 0) throw ContractError("separability check needs a nonempty test split");
  SeparabilityReport r;
  r.total = test.size();
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (hand_classify(estimate_thickness(test.images, i)) == test.labels[i]) ++r.correct;
  }
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
  return r;
}

nlohmann::json bundle_spec_to_json(const BundleSpec& s) {
  return {{"labeled_per_class", s.labeled_per_class},
          {"unlabeled", s.unlabeled},
          {"test_per_class", s.test_per_class},
          {"pool_kind", pool_kind_name(s.pool_kind)},
          {"bias", s.bias},
          {"seed", s.seed},
          {"synthetic_pool", s.synthetic_pool.string()},
          {"render",
           {{"erosion", s.render.erosion},
            {"band_intensity", s.render.band_intensity},
            {"background_amplitude", s.render.background_amplitude},
            {"pixel_noise", s.render.pixel_noise}}}};
}

BundleSpec bundle_spec_from_json(const nlohmann::json& j, BundleSpec s) {
  if (!j.is_object()) throw ConfigError("data config must be a JSON object");
  try {
    s.labeled_per_class = j.value("labeled_per_class", s.labeled_per_class);
    s.unlabeled = j.value("unlabeled", s.unlabeled);
    s.test_per_class = j.value("test_per_class", s.test_per_class);
    if (j.contains("pool_kind")) s.pool_kind = parse_pool_kind(j.at("pool_kind").get<std::string>());
    if (j.contains("bias")) s.bias = j.at("bias").get<std::array<double, kNumClasses>>();
    s.seed = j.value("seed", s.seed);
    if (j.contains("synthetic_pool")) s.synthetic_pool = j.at("synthetic_pool").get<std::string>();
    if (j.contains("render")) {
      const auto& r = j.at("render");
      if (r.contains("erosion")) s.render.erosion = r.at("erosion").get<std::array<double, kNumClasses>>();
      s.render.band_intensity = r.value("band_intensity", s.render.band_intensity);
      s.render.background_amplitude = r.value("background_amplitude", s.render.background_amplitude);
      s.render.pixel_noise = r.value("pixel_noise", s.render.pixel_noise);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad data config: ") + e.what());
  }
  s.validate();
  return s;
}

void save_bundle(const std::filesystem::path& dir, const DatasetBundle& b) {
  std::filesystem::create_directories(dir);
  save_tnsr(dir / "labeled.tnsr", b.labeled.images);
  save_tnsr(dir / "unlabeled.tnsr", b.unlabeled.images);
  save_tnsr(dir / "test.tnsr", b.test.images);
  write_label_csv(dir / "labeled.csv", b.labeled.ids, &b.labeled.labels);
  write_label_csv(dir / "test.csv", b.test.ids, &b.test.labels);
  write_label_csv(dir / "unlabeled.csv", b.unlabeled.ids, nullptr);
  std::ofstream os(dir / "bundle_meta.json");
  if (!os) throw IoError("cannot write " + (dir / "bundle_meta.json").string());
  os << b.meta.dump(2) << '\n';
}

DatasetBundle load_bundle(const std::filesystem::path& dir) {
  const auto meta_path = dir / "bundle_meta.json";
  std::ifstream is(meta_path);
  if (!is) throw IoError("cannot open " + meta_path.string());
  DatasetBundle b;
  try {
    b.meta = nlohmann::json::parse(is);
    b.unlabeled.kind = parse_pool_kind(b.meta.at("pool_kind").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(meta_path.string() + ": " + e.what());
  }
  b.labeled.images = load_tnsr(dir / "labeled.tnsr");
  b.unlabeled.images = load_tnsr(dir / "unlabeled.tnsr");
  b.test.images = load_tnsr(dir / "test.tnsr");
  read_label_csv(dir / "labeled.csv", b.labeled.ids, &b.labeled.labels);
  read_label_csv(dir / "test.csv", b.test.ids, &b.test.labels);
  read_label_csv(dir / "unlabeled.csv", b.unlabeled.ids, nullptr);
  if (b.labeled.images.dim(0) != b.labeled.size() || b.test.images.dim(0) != b.test.size() ||
      b.unlabeled.images.dim(0) != b.unlabeled.size()) {
    throw IoError(dir.string() + ": image stacks and id lists disagree in length");
  }
  return b;
}

}  // namespace sinessl
