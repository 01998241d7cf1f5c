#pragma once

#include "sadarts/tensor.hpp"

#include <span>
#include <vector>

namespace sadarts {

struct ConvAttrs {
  Index stride = 1;
  Index padding = 0;
  Index dilation = 1;
  Index groups = 1;
};

struct PoolAttrs {
  Index kernel = 3;
  Index stride = 1;
  Index padding = 1;
  bool count_include_pad = false;
};

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
/// y = x * weight^T + bias; x [N,F], weight [O,F], bias [O] (optional).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = Tensor());

// Spatial primitives, NCHW layout. Weight layout [O, C/groups, kh, kw].
Tensor conv2d(const Tensor& x, const Tensor& weight, const ConvAttrs& attrs = {});
Tensor avg_pool2d(const Tensor& x, const PoolAttrs& attrs = {});
Tensor max_pool2d(const Tensor& x, const PoolAttrs& attrs = {});
Tensor global_avg_pool(const Tensor& x);
/// Keeps every stride-th row and column starting at 0.
Tensor subsample(const Tensor& x, Index stride);

// Elementwise.
Tensor relu(const Tensor& x);
Tensor identity(const Tensor& x);
Tensor zeros(const Shape& shape);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor erf(const Tensor& x);
Tensor square(const Tensor& x);

// Reductions.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor logsumexp(const Tensor& x, std::size_t axis);
/// Mean negative log-likelihood of integer labels under softmax(logits).
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

// Structural.
Tensor reshape(const Tensor& x, Shape shape);
/// Row r of a 2-D tensor as a 1-D tensor.
Tensor select_row(const Tensor& table, Index row);
/// y = sum_k weights[k] * xs[k]; weights is 1-D of length xs.size().
Tensor weighted_sum(std::span<const Tensor> xs, const Tensor& weights);
/// Channel k of the output is channel indices[k] of x (axis 1).
Tensor channel_gather(const Tensor& x, std::span<const Index> indices);
Tensor channel_concat(std::span<const Tensor> xs);

}  // namespace sadarts
