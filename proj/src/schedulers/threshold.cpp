#include "sinessl/schedulers/threshold.hpp"

#include <algorithm>
#include <cmath>

#include "sinessl/errors.hpp"

namespace sinessl {
namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

IterationClock::IterationClock(std::size_t iter, std::size_t total) : i(iter), i_max(total) {
  if (total == 0) throw ContractError("iteration clock needs i_max > 0");
  if (iter > total) {
    throw ContractError("iteration " + std::to_string(iter) + " exceeds i_max " + std::to_string(total));
  }
}

schedule::AdaptiveAscent::AdaptiveAscent(double m, std::size_t classes)
    : momentum(m), num_classes(classes), tau(classes ? 1.0 / static_cast<double>(classes) : 0.0) {}

void validate(const ThresholdSchedule& s) {
  auto unit = [](double v, const char* what) {
    if (!(v > 0.0 && v <= 1.0)) throw ConfigError(std::string(what) + " must lie in (0, 1], got " + std::to_string(v));
  };
  std::visit(Overloaded{
                 [&](const schedule::Fixed& f) { unit(f.t_f, "t_f"); },
                 [&](const schedule::LinearDecay& l) {
                   unit(l.t_f, "t_f");
                   unit(l.alpha, "alpha");
                 },
                 [&](const schedule::SinusoidalDecay& sd) {
                   unit(sd.t_f, "t_f");
                   unit(sd.alpha, "alpha");
                   if (!(sd.beta >= 0.0)) throw ConfigError("beta must be non-negative");
                   if (!(sd.omega > 0.0)) throw ConfigError("omega must be positive");
                 },
                 [&](const schedule::AdaptiveAscent& a) {
                   if (!(a.momentum >= 0.0 && a.momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
                   if (a.num_classes < 2) throw ConfigError("adaptive schedule needs num_classes >= 2");
                 },
             },
             s);
}

double linear_component(double t_f, double alpha, const IterationClock& clock) {
  const double progress = static_cast<double>(clock.i) / static_cast<double>(clock.i_max);
  return t_f * (1.0 - alpha * progress);
}

double threshold_at(const ThresholdSchedule& s, const IterationClock& clock) {
  return std::visit(Overloaded{
                        [](const schedule::Fixed& f) { return clamp01(f.t_f); },
                        [&](const schedule::LinearDecay& l) { return clamp01(linear_component(l.t_f, l.alpha, clock)); },
                        [&](const schedule::SinusoidalDecay& sd) {
                          const double wave = sd.beta * std::sin(sd.omega * static_cast<double>(clock.i));
                          return clamp01(linear_component(sd.t_f, sd.alpha, clock) + wave);
                        },
                        [](const schedule::AdaptiveAscent&) -> double {
                          throw ContractError("threshold_at called with an adaptive schedule; use adaptive_update");
                        },
                    },
                    s);
}

double adaptive_update(schedule::AdaptiveAscent& state, std::span<const double> batch_max_probs) {
  if (batch_max_probs.empty()) throw ContractError("adaptive_update needs a nonempty batch");
  double mean = 0.0;
  for (double p : batch_max_probs) mean += p;
  mean /= static_cast<double>(batch_max_probs.size());
  state.tau = state.momentum * state.tau + (1.0 - state.momentum) * mean;
  return state.tau;
}

std::pair<double, double> envelope(const schedule::SinusoidalDecay& s, const IterationClock& clock) {
  const double lin = linear_component(s.t_f, s.alpha, clock);
  return {clamp01(lin - s.beta), clamp01(lin + s.beta)};
}

double initial_threshold(const ThresholdSchedule& s) {
  if (const auto* a = std::get_if<schedule::AdaptiveAscent>(&s)) return a->tau;
  return threshold_at(s, IterationClock(0, 1));
}

std::string kind_name(const ThresholdSchedule& s) {
  return std::visit(Overloaded{
                        [](const schedule::Fixed&) { return std::string("fixed"); },
                        [](const schedule::LinearDecay&) { return std::string("linear_decay"); },
                        [](const schedule::SinusoidalDecay&) { return std::string("sinusoidal_decay"); },
                        [](const schedule::AdaptiveAscent&) { return std::string("adaptive_ascent"); },
                    },
                    s);
}

ThresholdSchedule schedule_from_json(const nlohmann::json& j, std::size_t num_classes) {
  if (!j.is_object()) throw ConfigError("schedule config must be a JSON object");
  const std::string kind = j.value("kind", "sinusoidal_decay");
  ThresholdSchedule s;
  try {
    if (kind == "fixed") {
      s = schedule::Fixed{j.value("t_f", schedule::kDefaultThreshold)};
    } else if (kind == "linear_decay") {
      s = schedule::LinearDecay{j.value("t_f", schedule::kDefaultThreshold), j.value("alpha", schedule::kDefaultAlpha)};
    } else if (kind == "sinusoidal_decay") {
      s = schedule::SinusoidalDecay{j.value("t_f", schedule::kDefaultThreshold), j.value("alpha", schedule::kDefaultAlpha),
                                    j.value("beta", schedule::kDefaultBeta), j.value("omega", 1.0)};
    } else if (kind == "adaptive_ascent") {
      s = schedule::AdaptiveAscent(j.value("momentum", 0.999), num_classes);
    } else {
      throw ConfigError("unknown schedule kind '" + kind + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad schedule config: ") + e.what());
  }
  validate(s);
  return s;
}

nlohmann::json schedule_to_json(const ThresholdSchedule& s) {
  return std::visit(Overloaded{
                        [](const schedule::Fixed& f) { return nlohmann::json{{"kind", "fixed"}, {"t_f", f.t_f}}; },
                        [](const schedule::LinearDecay& l) {
                          return nlohmann::json{{"kind", "linear_decay"}, {"t_f", l.t_f}, {"alpha", l.alpha}};
                        },
                        [](const schedule::SinusoidalDecay& sd) {
                          return nlohmann::json{{"kind", "sinusoidal_decay"}, {"t_f", sd.t_f}, {"alpha", sd.alpha},
                                                {"beta", sd.beta},           {"omega", sd.omega}};
                        },
                        [](const schedule::AdaptiveAscent& a) {
                          return nlohmann::json{{"kind", "adaptive_ascent"}, {"momentum", a.momentum}};
                        },
                    },
                    s);
}

}  // namespace sinessl
