#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "advinn/tensor.hpp"

// Differentiable primitives. Each one records itself on the active tape when
// any input requires a gradient; see tape.hpp.
//
// Binary elementwise operations require identical shapes, except that either
// operand may be a one-element tensor, which is broadcast.
namespace advinn {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor mul(const Tensor& a, double b);

// [m x k] * [k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
// x [N x in] * weight[out x in]^T + bias[out]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Stride-1 2-D convolution (cross-correlation). x: N x C x H x W,
// weight: O x C x k x k, bias: O (or an empty Tensor for none), symmetric zero
// padding `pad` on every side.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t pad);

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);  // DomainError on any value <= 0
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor square(const Tensor& x);

// Clamp to [lo, hi]. The gradient is 1 on the closed interval and 0 outside.
Tensor clamp(const Tensor& x, double lo, double hi);
// Elementwise clamp to [lo_i, hi_i]; the bounds are treated as constants.
Tensor clamp(const Tensor& x, const Tensor& lo, const Tensor& hi);

Tensor sum(const Tensor& x);   // scalar
Tensor mean(const Tensor& x);  // scalar

Tensor reshape(const Tensor& x, Shape shape);
// `length` entries of `axis` starting at `start`.
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);
// Gathers the listed positions of `axis`, in order.
Tensor index_select(const Tensor& x, std::size_t axis, std::span<const std::size_t> indices);

// Along the last axis.
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);
// Mean negative log-likelihood of `labels` under softmax(logits), logits
// N x K (or a single row of K).
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);
Tensor cross_entropy(const Tensor& logits, std::size_t label);

// Non-overlapping window average, N x C x H x W -> N x C x H/k x W/k.
Tensor avg_pool2d(const Tensor& x, std::size_t window);
// N x C x H x W -> N x C
Tensor global_avg_pool(const Tensor& x);
// Subtracts each H x W plane's mean: N x C x H x W -> same shape.
Tensor center_planes(const Tensor& x);

}  // namespace advinn
