#include "sinessl/models/classifier.hpp"

#include <cmath>
#include <functional>
#include <string>

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

std::string stage_path(std::size_t s) { return "stage" + std::to_string(s); }

Var conv_norm(const Binder& bind, Var x, const std::string& path) {
  return ops::sample_norm(ops::conv2d(x, bind(path)));
}

Var forward_impl(Graph& g, const Binder& bind, Var x, const ClassifierConfig& cfg) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != cfg.channels || s[2] != cfg.height || s[3] != cfg.width) {
    throw DimensionError("classifier input " + shape_to_string(s) + " does not match [B," +
                         std::to_string(cfg.channels) + "," + std::to_string(cfg.height) + "," +
                         std::to_string(cfg.width) + "]");
  }
  (void)g;
  Var h = ops::relu(conv_norm(bind, x, "stem/conv"));
  std::size_t prev = cfg.widths.front();
  for (std::size_t st = 0; st < cfg.widths.size(); ++st) {
    const std::string sp = stage_path(st);
    h = ops::avg_pool2(h);
    if (cfg.widths[st] != prev) h = ops::relu(conv_norm(bind, h, sp + "/transition"));
    prev = cfg.widths[st];
    for (std::size_t b = 0; b < cfg.blocks_per_stage; ++b) {
      const std::string bp = sp + "/block" + std::to_string(b);
      Var r = ops::relu(conv_norm(bind, h, bp + "/conv1"));
      r = conv_norm(bind, r, bp + "/conv2");
      h = ops::relu(ops::add(h, r));
    }
  }
  Var pooled = ops::global_avg_pool(h);
  return ops::channel_add(ops::matmul(pooled, bind("head/weight")), bind("head/bias"));
}

}  // namespace

void ClassifierConfig::validate() const {
  if (num_classes < 2) throw ConfigError("classifier num_classes must be >= 2");
  if (widths.empty()) throw ConfigError("classifier widths must be nonempty");
  if (blocks_per_stage == 0) throw ConfigError("classifier blocks_per_stage must be positive");
  if (channels == 0) throw ConfigError("classifier channels must be positive");
  for (auto w : widths) {
    if (w == 0) throw ConfigError("classifier widths must be positive");
  }
  const std::size_t factor = std::size_t{1} << widths.size();
  if (height % factor || width % factor) {
    throw ConfigError("classifier input " + std::to_string(height) + "x" + std::to_string(width) +
                      " must be divisible by " + std::to_string(factor) + " for " + std::to_string(widths.size()) +
                      " stages");
  }
}

ModelParams init_classifier(const ClassifierConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelParams p;
  const std::size_t w0 = cfg.widths.front();
  p.add("stem/conv", he_normal({w0, cfg.channels, 3, 3}, cfg.channels * 9, rng));
  std::size_t prev = w0;
  for (std::size_t st = 0; st < cfg.widths.size(); ++st) {
    const std::size_t w = cfg.widths[st];
    const std::string sp = stage_path(st);
    if (w != prev) p.add(sp + "/transition", he_normal({w, prev, 3, 3}, prev * 9, rng));
    prev = w;
    for (std::size_t b = 0; b < cfg.blocks_per_stage; ++b) {
      const std::string bp = sp + "/block" + std::to_string(b);
      p.add(bp + "/conv1", he_normal({w, w, 3, 3}, w * 9, rng));
      p.add(bp + "/conv2", he_normal({w, w, 3, 3}, w * 9, rng));
    }
  }
  p.add("head/weight", he_normal({prev, cfg.num_classes}, prev, rng));
  p.add("head/bias", Tensor({cfg.num_classes}, 0.0));
  if (p.parameter_count() >= kMaxClassifierParams) {
    throw ConfigError("classifier has " + std::to_string(p.parameter_count()) + " parameters, limit is " +
                      std::to_string(kMaxClassifierParams));
  }
  p.set_requires_grad(true);
  return p;
}

Var classifier_forward(Graph& g, ModelParams& params, Var x, const ClassifierConfig& cfg) {
  return forward_impl(g, [&](const std::string& path) { return g.parameter(params.at(path)); }, x, cfg);
}

Tensor classifier_logits(const ModelParams& params, const Tensor& x, const ClassifierConfig& cfg) {
  Graph g(false);
  Var out = forward_impl(g, [&](const std::string& path) { return g.view(params.at(path)); }, g.view(x), cfg);
  return out.value();
}

void to_json(nlohmann::json& j, const ClassifierConfig& c) {
  j = nlohmann::json{{"channels", c.channels},           {"height", c.height},
                     {"width", c.width},                 {"widths", c.widths},
                     {"blocks_per_stage", c.blocks_per_stage}, {"num_classes", c.num_classes}};
}

void from_json(const nlohmann::json& j, ClassifierConfig& c) {
  const ClassifierConfig d = c;
  c.channels = j.value("channels", d.channels);
  c.height = j.value("height", d.height);
  c.width = j.value("width", d.width);
  c.widths = j.value("widths", d.widths);
  c.blocks_per_stage = j.value("blocks_per_stage", d.blocks_per_stage);
  c.num_classes = j.value("num_classes", d.num_classes);
}

}  // namespace sinessl
