// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor operations. Layout is channels-last: images and
// feature maps are [H, W, C], convolution kernels [k, k, Cin, Cout].
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "informer/tensor.hpp"

namespace informer {

enum class ElementwiseKind {
  kAdd,
  kSub,
  kMul,
  kDiv,
  kExp,
  kLog,
  kSqrt,
  kSquare,
  kNegate,
  kLeakyRelu,  // param = negative slope
  kClampMin,   // param = lower bound
  kTanh,
  kSigmoid,
  kSoftplus,
};

struct ElementwiseOp {
  ElementwiseKind kind;
  double param = 0.0;
};

inline constexpr double kDefaultLeakySlope = 0.01;

// Binary kinds take numpy-style broadcasting (right-aligned, size-1 dims
// expand); unary kinds ignore `b`.
Tensor elementwise(ElementwiseOp op, const Tensor& a, const std::optional<Tensor>& b = std::nullopt);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor neg(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = kDefaultLeakySlope);
Tensor clamp_min(const Tensor& a, double bound);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);

Shape broadcast_shape(const Shape& a, const Shape& b);

// [..., M, K] x [..., K, P] -> [..., M, P] with broadcast batch dims.
Tensor matmul(const Tensor& a, const Tensor& b);

// x [H, W, Cin], kernels [k, k, Cin, Cout], bias [Cout]. Output size is
// floor((H + 2p - k) / stride) + 1. An optional {0,1} mask [k, k] multiplies
// the kernel in both passes.
Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias, int stride, int padding,
              const std::optional<Tensor>& mask = std::nullopt);

// One output position of the stride-`stride` conv above, computed with the
// same accumulation order as conv2d. No gradient tracking.
std::vector<double> conv2d_at(const Tensor& x, const Tensor& kernels, const Tensor& bias, int stride,
                              int padding, const std::optional<Tensor>& mask, std::size_t out_h,
                              std::size_t out_w);

// Adjoint-shaped upsampling conv: H' = (H - 1) * stride - 2p + k + output_padding.
Tensor conv_transpose2d(const Tensor& x, const Tensor& kernels, const Tensor& bias, int stride,
                        int padding, int output_padding);

enum class ReduceKind { kSum, kMean };

Tensor reduce(ReduceKind kind, const Tensor& x, std::vector<int> axes, bool keepdims = false);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, int axis);

Tensor concat(std::span<const Tensor> tensors, int axis);
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, std::vector<std::size_t> perm);
Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length);

// Multiply-accumulate counter for convolution forward passes on this thread.
void reset_mac_count();
std::uint64_t mac_count();

struct GradCheckOptions {
  double step = 1e-4;
  // Checks every coordinate when 0; otherwise an evenly strided subset of at
  // most this many coordinates per input.
  std::size_t max_coords_per_input = 0;
};

// Max over input coordinates of |analytic - central difference| /
// max(1, |analytic|, |numeric|). `f` must return a scalar.
double grad_check(const std::function<Tensor(std::span<const Tensor>)>& f,
                  std::vector<Tensor> inputs, const GradCheckOptions& options = {});

}  // namespace informer
