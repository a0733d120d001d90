#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <variant>

#include "json.hpp"

namespace sinessl {

/// Current iteration i of a run with i_max iterations; 0 <= i <= i_max.
struct IterationClock {
  std::size_t i = 0;
  std::size_t i_max = 1;

  IterationClock(std::size_t iter, std::size_t total);
};

namespace schedule {

inline constexpr double kDefaultThreshold = 0.95;
inline constexpr double kDefaultAlpha = 0.5;
inline constexpr double kDefaultBeta = 0.05;

struct Fixed {
  double t_f = kDefaultThreshold;
};

/// t_f * (1 - alpha * i / i_max)
struct LinearDecay {
  double t_f = kDefaultThreshold;
  double alpha = kDefaultAlpha;
};

/// Linear decay plus a beta * sin(omega * i) fluctuation, clamped to [0, 1].
struct SinusoidalDecay {
  double t_f = kDefaultThreshold;
  double alpha = kDefaultAlpha;
  double beta = kDefaultBeta;
  double omega = 1.0;
};

/// Global self-adaptive threshold: an EMA of the mean max-confidence of each
/// unlabeled batch, starting at 1 / num_classes.
struct AdaptiveAscent {
  double momentum = 0.999;
  std::size_t num_classes = 3;
  double tau = 1.0 / 3.0;

  AdaptiveAscent() = default;
  AdaptiveAscent(double m, std::size_t classes);
};

}  // namespace schedule

using ThresholdSchedule =
    std::variant<schedule::Fixed, schedule::LinearDecay, schedule::SinusoidalDecay, schedule::AdaptiveAscent>;

void validate(const ThresholdSchedule& s);

/// Threshold of a stateless schedule at the given clock, clamped to [0, 1].
/// Throws ContractError for AdaptiveAscent, whose value comes from
/// adaptive_update.
double threshold_at(const ThresholdSchedule& s, const IterationClock& clock);

/// The decaying part alone: t_f * (1 - alpha * i / i_max).
double linear_component(double t_f, double alpha, const IterationClock& clock);

/// tau <- momentum * tau + (1 - momentum) * mean(batch_max_probs).
double adaptive_update(schedule::AdaptiveAscent& state, std::span<const double> batch_max_probs);

/// (linear - beta, linear + beta), each clamped to [0, 1]. threshold_at lies
/// inside, bounds included.
std::pair<double, double> envelope(const schedule::SinusoidalDecay& s, const IterationClock& clock);

/// Schedule-specific starting value: threshold_at(i = 0) for stateless
/// variants, tau for AdaptiveAscent.
double initial_threshold(const ThresholdSchedule& s);

std::string kind_name(const ThresholdSchedule& s);

/// JSON keys: kind, t_f, alpha, beta, omega, momentum. Missing keys take the
/// defaults above. num_classes seeds the adaptive schedule's initial tau.
ThresholdSchedule schedule_from_json(const nlohmann::json& j, std::size_t num_classes = 3);
nlohmann::json schedule_to_json(const ThresholdSchedule& s);

}  // namespace sinessl
