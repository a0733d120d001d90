#include "sinessl/models/denoiser.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sinessl/errors.hpp"
#include "sinessl/numerics/ops.hpp"

namespace sinessl {
namespace {

using Binder = std::function<Var(const std::string&)>;

Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : t.data()) v = std * rng.normal();
  return t;
}

std::string enc(std::size_t k) { return "enc" + std::to_string(k); }
std::string dec(std::size_t k) { return "dec" + std::to_string(k); }

// conv + bias + per-sample time projection, then relu
Var conv_block(Graph& g, const Binder& bind, Var x, Var temb, const std::string& path) {
  Var h = ops::channel_add(ops::conv2d(x, bind(path + "/conv")), bind(path + "/bias"));
  h = ops::channel_add(h, ops::matmul(temb, bind(path + "/time")));
  (void)g;
  return ops::relu(h);
}

Var forward_impl(Graph& g, const Binder& bind, Var x, std::span<const std::size_t> steps, const DenoiserConfig& cfg) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != cfg.channels || s[2] != cfg.height || s[3] != cfg.width) {
    throw DimensionError("denoiser input " + shape_to_string(s) + " does not match [B," + std::to_string(cfg.channels) +
                         "," + std::to_string(cfg.height) + "," + std::to_string(cfg.width) + "]");
  }
  const std::size_t batch = s[0];
  if (steps.size() != batch) {
    throw DimensionError("denoiser got " + std::to_string(steps.size()) + " steps for batch " + std::to_string(batch));
  }
  const std::size_t dim = cfg.time_embed_dim;
  Tensor emb({batch, dim});
  for (std::size_t b = 0; b < batch; ++b) {
    if (steps[b] < 1 || steps[b] > cfg.num_steps) {
      throw IndexError("diffusion step " + std::to_string(steps[b]) + " outside [1, " + std::to_string(cfg.num_steps) +
                       "]");
    }
    const Tensor e = time_embedding(static_cast<double>(steps[b]), dim);
    std::copy(e.data().begin(), e.data().end(), emb.data().begin() + static_cast<long>(b * dim));
  }
  Var temb = ops::channel_add(ops::matmul(g.constant(std::move(emb)), bind("time/weight")), bind("time/bias"));
  temb = ops::relu(temb);

  std::vector<Var> skips;
  Var h = conv_block(g, bind, x, temb, enc(0));
  for (std::size_t k = 1; k <= cfg.depth; ++k) {
    skips.push_back(h);
    h = conv_block(g, bind, ops::avg_pool2(h), temb, enc(k));
  }
  for (std::size_t k = cfg.depth; k-- > 0;) {
    h = ops::concat_channels(ops::upsample2(h), skips[k]);
    h = conv_block(g, bind, h, temb, dec(k));
  }
  return ops::channel_add(ops::conv2d(h, bind("out/conv")), bind("out/bias"));
}

}  // namespace

void DenoiserConfig::validate() const {
  if (base_channels == 0 || channels == 0) throw ConfigError("denoiser channel counts must be positive");
  if (time_embed_dim == 0 || time_embed_dim % 2) throw ConfigError("denoiser time_embed_dim must be even and positive");
  if (num_steps == 0) throw ConfigError("denoiser num_steps must be positive");
  const std::size_t factor = std::size_t{1} << depth;
  if (height % factor || width % factor) {
    throw ConfigError("denoiser input must be divisible by " + std::to_string(factor) + " for depth " +
                      std::to_string(depth));
  }
}

std::size_t DenoiserConfig::level_channels(std::size_t k) const { return base_channels << std::min<std::size_t>(k, 1); }

Tensor time_embedding(double t, std::size_t dim) {
  if (dim == 0 || dim % 2) throw ContractError("time embedding dimension must be even and positive, got " + std::to_string(dim));
  Tensor out({dim});
  for (std::size_t k = 0; k < dim / 2; ++k) {
    const double omega = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(dim));
    out[2 * k] = std::sin(t * omega);
    out[2 * k + 1] = std::cos(t * omega);
  }
  return out;
}

ModelParams init_denoiser(const DenoiserConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelParams p;
  const std::size_t dim = cfg.time_embed_dim;
  p.add("time/weight", he_normal({dim, dim}, dim, rng));
  p.add("time/bias", Tensor({dim}, 0.0));
  auto add_block = [&](const std::string& path, std::size_t in, std::size_t out) {
    p.add(path + "/conv", he_normal({out, in, 3, 3}, in * 9, rng));
    p.add(path + "/bias", Tensor({out}, 0.0));
    p.add(path + "/time", he_normal({dim, out}, dim, rng));
  };
  add_block(enc(0), cfg.channels, cfg.level_channels(0));
  for (std::size_t k = 1; k <= cfg.depth; ++k) add_block(enc(k), cfg.level_channels(k - 1), cfg.level_channels(k));
  for (std::size_t k = cfg.depth; k-- > 0;) {
    const std::size_t from_below = k + 1 == cfg.depth ? cfg.level_channels(cfg.depth) : cfg.level_channels(k + 1);
    add_block(dec(k), from_below + cfg.level_channels(k), cfg.level_channels(k));
  }
  p.add("out/conv", he_normal({cfg.channels, cfg.level_channels(0), 3, 3}, cfg.level_channels(0) * 9, rng));
  p.add("out/bias", Tensor({cfg.channels}, 0.0));
  p.set_requires_grad(true);
  return p;
}

Var denoiser_forward(Graph& g, ModelParams& params, Var x_t, std::span<const std::size_t> steps,
                     const DenoiserConfig& cfg) {
  return forward_impl(g, [&](const std::string& path) { return g.parameter(params.at(path)); }, x_t, steps, cfg);
}

Tensor denoiser_predict(const ModelParams& params, const Tensor& x_t, std::span<const std::size_t> steps,
                        const DenoiserConfig& cfg) {
  Graph g(false);
  Var out = forward_impl(g, [&](const std::string& path) { return g.view(params.at(path)); }, g.view(x_t), steps, cfg);
  return out.value();
}

void to_json(nlohmann::json& j, const DenoiserConfig& c) {
  j = nlohmann::json{{"channels", c.channels},
                     {"height", c.height},
                     {"width", c.width},
                     {"base_channels", c.base_channels},
                     {"depth", c.depth},
                     {"time_embed_dim", c.time_embed_dim},
                     {"num_steps", c.num_steps}};
}

void from_json(const nlohmann::json& j, DenoiserConfig& c) {
  const DenoiserConfig d = c;
  c.channels = j.value("channels", d.channels);
  c.height = j.value("height", d.height);
  c.width = j.value("width", d.width);
  c.base_channels = j.value("base_channels", d.base_channels);
  c.depth = j.value("depth", d.depth);
  c.time_embed_dim = j.value("time_embed_dim", d.time_embed_dim);
  c.num_steps = j.value("num_steps", d.num_steps);
}

}  // namespace sinessl
