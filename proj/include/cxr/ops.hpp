#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cxr/autograd.hpp"
#include "cxr/tensor.hpp"

namespace cxr {

enum class Padding { Valid, Same };

struct Conv2dOptions {
  std::size_t stride = 1;
  Padding padding = Padding::Valid;
};

// Output extents and leading padding of a square-kernel convolution. "same" pads
// with zeros and puts the odd extra row/column on the bottom/right.
struct ConvGeometry {
  std::size_t out_h = 0;
  std::size_t out_w = 0;
  std::size_t pad_top = 0;
  std::size_t pad_left = 0;
};

ConvGeometry conv_geometry(std::size_t height, std::size_t width, std::size_t kernel,
                           Conv2dOptions options);

std::size_t pool_extent(std::size_t extent, std::size_t window, std::size_t stride);

// Plain forward kernels. All shapes are validated; mismatches throw std::invalid_argument.

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 Conv2dOptions options = {});
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input, std::size_t window, std::size_t stride);
template <typename T>
Tensor<T> global_avg_pool2d(const Tensor<T>& input);
template <typename T>
Tensor<T> dense(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias);
template <typename T>
Tensor<T> relu(const Tensor<T>& input);
template <typename T>
Tensor<T> softmax(const Tensor<T>& input);
template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts);
template <typename T>
Tensor<T> flatten(const Tensor<T>& input);

// Recorded variants. Each appends one op to the input's tape.

template <typename T>
Var<T> conv2d(Var<T> input, Var<T> kernel, Var<T> bias, Conv2dOptions options = {});
template <typename T>
Var<T> maxpool2d(Var<T> input, std::size_t window, std::size_t stride);
template <typename T>
Var<T> global_avg_pool2d(Var<T> input);
template <typename T>
Var<T> dense(Var<T> input, Var<T> weights, Var<T> bias);
template <typename T>
Var<T> relu(Var<T> input);
template <typename T>
Var<T> softmax(Var<T> input);
template <typename T>
Var<T> concat(std::span<const Var<T>> parts);
template <typename T>
Var<T> flatten(Var<T> input);
// Elementwise product of equal shapes.
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
// Sum of all elements as a one-element tensor.
template <typename T>
Var<T> sum(Var<T> input);

}  // namespace cxr
