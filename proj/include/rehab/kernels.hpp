#pragma once

// Plain (non-differentiating) tensor kernels. The autodiff layer in
// autodiff.hpp composes these for both forward values and local gradients.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "rehab/tensor.hpp"

namespace rehab::kernel {

/// Numpy-style broadcast of two shapes (trailing axes aligned).
Shape broadcast_shape(const Shape& a, const Shape& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

/// Sums `grad` down to `target`, undoing a broadcast from `target` to grad.shape().
Tensor reduce_to_shape(const Tensor& grad, const Shape& target);

/// Batched matrix product over the last two axes; leading axes broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Gradients of matmul. Either output pointer may be null.
void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& grad_out, Tensor* grad_a, Tensor* grad_b);

Tensor permute(const Tensor& x, std::span<const std::size_t> axes);
std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> axes);

/// Swaps the last two axes.
Tensor transpose_last(const Tensor& x);

Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);

Tensor sum(const Tensor& x, std::size_t axis, bool keepdim);
double sum_all(const Tensor& x);

Tensor relu(const Tensor& x);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);

struct Conv2dOptions {
  std::array<std::size_t, 2> stride{1, 1};
  std::array<std::size_t, 2> dilation{1, 1};
  std::array<std::size_t, 2> padding{0, 0};
};

/// Output extent along one spatial axis, or 0 if the kernel does not fit.
std::size_t conv_output_size(std::size_t in, std::size_t k, std::size_t stride, std::size_t dilation,
                             std::size_t padding);

/// Cross-correlation of x [N,Cin,H,W] with kernel [Cout,Cin,kh,kw]; zero padding.
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Conv2dOptions& opts = {});

void conv2d_backward(const Tensor& x, const Tensor& kernel, const Tensor& grad_out, const Conv2dOptions& opts,
                     Tensor* grad_x, Tensor* grad_kernel);

struct Pool2dOptions {
  std::array<std::size_t, 2> kernel{1, 1};
  std::array<std::size_t, 2> stride{1, 1};
  std::array<std::size_t, 2> padding{0, 0};
};

/// Max pooling on x [N,C,H,W]; padded cells never win. `argmax` receives the
/// flat input index selected for every output element.
Tensor max_pool2d(const Tensor& x, const Pool2dOptions& opts, std::vector<std::size_t>* argmax = nullptr);

}  // namespace rehab::kernel
