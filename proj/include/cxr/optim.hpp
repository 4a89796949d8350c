#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cxr/tensor.hpp"

namespace cxr {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct SgdConfig {
  double lr = 1e-2;
  double momentum = 0.0;
};

// Per-parameter accumulators. Adam uses first/second moments; SGD keeps its
// velocity in `first` and leaves `second` empty.
template <typename T>
struct OptimizerState {
  std::vector<Tensor<T>> first;
  std::vector<Tensor<T>> second;
  std::uint64_t step = 0;
};

// Bias-corrected Adam. `lr` overrides config.lr so a schedule can drive it.
template <typename T>
void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads,
               OptimizerState<T>& state, double lr, const AdamConfig& config);

// v' = momentum * v - lr * g;  p' = p + v'.
template <typename T>
void sgd_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads,
              OptimizerState<T>& state, double lr, double momentum);

template <typename T>
void adam_step(std::span<Tensor<T>> params, std::span<const Tensor<T>> grads,
               OptimizerState<T>& state, double lr, const AdamConfig& config) {
  std::vector<Tensor<T>*> refs;
  for (auto& p : params) refs.push_back(&p);
  adam_step<T>(std::span<Tensor<T>* const>(refs), grads, state, lr, config);
}

template <typename T>
void sgd_step(std::span<Tensor<T>> params, std::span<const Tensor<T>> grads,
              OptimizerState<T>& state, double lr, double momentum) {
  std::vector<Tensor<T>*> refs;
  for (auto& p : params) refs.push_back(&p);
  sgd_step<T>(std::span<Tensor<T>* const>(refs), grads, state, lr, momentum);
}

}  // namespace cxr
