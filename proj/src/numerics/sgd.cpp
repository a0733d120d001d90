#include "sinessl/numerics/sgd.hpp"

#include <string>

#include "sinessl/errors.hpp"

namespace sinessl {

SgdState::SgdState(double lr, double mom) : learning_rate(lr), momentum(mom) {
  if (!(lr >= 0.0)) throw ContractError("SGD learning rate must be non-negative");
  if (!(mom >= 0.0 && mom < 1.0)) throw ContractError("SGD momentum must lie in [0, 1)");
}

void sgd_step(std::span<Tensor* const> params, SgdState& state) {
  if (state.velocity.empty()) {
    state.velocity.reserve(params.size());
    for (const Tensor* p : params) state.velocity.emplace_back(p->numel(), 0.0);
  }
  if (state.velocity.size() != params.size()) {
    throw ContractError("SGD state tracks " + std::to_string(state.velocity.size()) + " parameters, got " +
                        std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k]->has_grad()) throw ContractError("sgd_step: parameter " + std::to_string(k) + " has no gradient");
    if (state.velocity[k].size() != params[k]->numel()) {
      throw ContractError("sgd_step: velocity shape does not match parameter " + std::to_string(k));
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    auto v = std::span<double>(state.velocity[k]);
    auto g = p.grad();
    auto d = p.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      v[i] = state.momentum * v[i] + g[i];
      d[i] -= state.learning_rate * v[i];
    }
    p.zero_grad();
  }
}

void zero_grads(std::span<Tensor* const> params) {
  for (Tensor* p : params) p->zero_grad();
}

}  // namespace sinessl
