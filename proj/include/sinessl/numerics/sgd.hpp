#pragma once

#include <span>
#include <vector>

#include "sinessl/numerics/tensor.hpp"

namespace sinessl {

/// Heavy-ball SGD state: v <- momentum * v + grad; p <- p - lr * v.
struct SgdState {
  double learning_rate = 0.03;
  double momentum = 0.9;
  std::vector<std::vector<double>> velocity;

  SgdState(double lr, double mom);
};

/// Applies one update to every parameter and zeroes their gradients.
/// Velocity buffers are created on first use and bound to parameter position.
void sgd_step(std::span<Tensor* const> params, SgdState& state);

void zero_grads(std::span<Tensor* const> params);

}  // namespace sinessl
