#include "sinessl/numerics/adam.hpp"

#include <cmath>

#include "sinessl/errors.hpp"

namespace sinessl {

AdamState::AdamState(double lr, double b1, double b2, double epsilon)
    : learning_rate(lr), beta1(b1), beta2(b2), eps(epsilon) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(b1 >= 0.0 && b1 < 1.0) || !(b2 >= 0.0 && b2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
}

void adam_step(std::span<Tensor* const> params, AdamState& s) {
  if (s.m.empty()) {
    for (const Tensor* p : params) {
      s.m.emplace_back(p->numel(), 0.0);
      s.v.emplace_back(p->numel(), 0.0);
    }
  }
  if (s.m.size() != params.size()) throw ContractError("Adam state bound to a different parameter list");
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    if (!p.has_grad()) throw ContractError("parameter " + std::to_string(k) + " has no gradient");
    if (s.m[k].size() != p.numel()) throw DimensionError("Adam moment size differs from its parameter");
    auto g = p.grad();
    auto d = p.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      s.m[k][i] = s.beta1 * s.m[k][i] + (1.0 - s.beta1) * g[i];
      s.v[k][i] = s.beta2 * s.v[k][i] + (1.0 - s.beta2) * g[i] * g[i];
      d[i] -= s.learning_rate * (s.m[k][i] / c1) / (std::sqrt(s.v[k][i] / c2) + s.eps);
    }
    p.zero_grad();
  }
}

}  // namespace sinessl
