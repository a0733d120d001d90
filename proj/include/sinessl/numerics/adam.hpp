#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sinessl/numerics/tensor.hpp"

namespace sinessl {

/// Bias-corrected Adam moments, bound to parameter position like SgdState.
struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<std::vector<double>> m, v;

  AdamState(double lr, double b1 = 0.9, double b2 = 0.999, double epsilon = 1e-8);
};

/// One Adam update on every parameter, then zeroes their gradients.
void adam_step(std::span<Tensor* const> params, AdamState& state);

}  // namespace sinessl
