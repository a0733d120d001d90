#pragma once

#include <cstddef>
#include <span>

#include "sinessl/numerics/graph.hpp"
#include "sinessl/numerics/tensor.hpp"

/// Differentiable operations. Every op records its backward rule on the
/// graph owning its inputs. Broadcasting is limited to scalar factors and the
/// explicit per-channel add; everything else requires matching shapes.
namespace sinessl::ops {

Var add(Var a, Var b);
/// Elementwise product of equally shaped tensors.
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var matmul(Var a, Var b);

/// 3x3 cross-correlation, stride 1, zero padding 1.
/// x: [N, C, H, W], w: [F, C, 3, 3] -> [N, F, H, W].
Var conv2d(Var x, Var w);

/// Adds b along axis 1 of x. b is either [C] (shared by all samples) or
/// [N, C] (one vector per sample). x has shape [N, C, ...].
Var channel_add(Var x, Var b);

Var relu(Var x);
/// 2x2 mean pooling with stride 2; H and W must be even.
Var avg_pool2(Var x);
/// [N, C, H, W] -> [N, C].
Var global_avg_pool(Var x);
/// Nearest-neighbour 2x upsampling.
Var upsample2(Var x);

/// Standardizes every sample over all of its non-batch elements. No batch
/// statistics are involved, so each output row depends on its own input only.
Var sample_norm(Var x, double eps = 1e-5);

/// Concatenation along the channel axis (axis 1).
Var concat_channels(Var a, Var b);
Var reshape(Var x, Shape shape);
Var sum(Var x);

/// Mean over the batch of -log softmax(logits)[target].
Var softmax_cross_entropy(Var logits, std::span<const std::size_t> targets);
/// sum_i weights[i] * CE_i / B. Zero weights drop an item while keeping it in
/// the denominator.
Var softmax_cross_entropy(Var logits, std::span<const std::size_t> targets, std::span<const double> weights);

/// Mean over all elements of (pred - target)^2.
Var mse(Var pred, Var target);

/// Row-wise softmax of a [B, C] tensor, max-subtracted.
Tensor softmax(const Tensor& logits);

}  // namespace sinessl::ops
