#include "cxr/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cxr {

namespace {

template <typename T>
void check_alignment(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads,
                     const char* op) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument(std::string(op) + ": " + std::to_string(params.size()) +
                                " parameters but " + std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i]->shape(), grads[i].shape(), op);
  }
}

template <typename T>
void ensure_slots(std::vector<Tensor<T>>& slots, std::span<Tensor<T>* const> params, const char* op) {
  if (slots.empty()) {
    for (const auto* p : params) slots.emplace_back(p->shape());
    return;
  }
  if (slots.size() != params.size()) {
    throw std::invalid_argument(std::string(op) + ": optimizer state tracks " +
                                std::to_string(slots.size()) + " tensors, got " +
                                std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(slots[i].shape(), params[i]->shape(), op);
  }
}

}  // namespace

template <typename T>
void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads,
               OptimizerState<T>& state, double lr, const AdamConfig& config) {
  check_alignment(params, grads, "adam_step");
  ensure_slots(state.first, params, "adam_step");
  ensure_slots(state.second, params, "adam_step");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(config.beta1);
  const T b2 = static_cast<T>(config.beta2);
  const T m_correction = static_cast<T>(1.0 - std::pow(config.beta1, t));
  const T v_correction = static_cast<T>(1.0 - std::pow(config.beta2, t));
  const T rate = static_cast<T>(lr);
  const T eps = static_cast<T>(config.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* p = params[i]->raw();
    T* m = state.first[i].raw();
    T* v = state.second[i].raw();
    const T* g = grads[i].raw();
    for (std::size_t j = 0; j < params[i]->size(); ++j) {
      m[j] = b1 * m[j] + (T{1} - b1) * g[j];
      v[j] = b2 * v[j] + (T{1} - b2) * g[j] * g[j];
      const T m_hat = m[j] / m_correction;
      const T v_hat = v[j] / v_correction;
      p[j] -= rate * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template <typename T>
void sgd_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads,
              OptimizerState<T>& state, double lr, double momentum) {
  check_alignment(params, grads, "sgd_step");
  ensure_slots(state.first, params, "sgd_step");
  ++state.step;
  const T mu = static_cast<T>(momentum);
  const T rate = static_cast<T>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* p = params[i]->raw();
    T* vel = state.first[i].raw();
    const T* g = grads[i].raw();
    for (std::size_t j = 0; j < params[i]->size(); ++j) {
      vel[j] = mu * vel[j] - rate * g[j];
      p[j] += vel[j];
    }
  }
}

template void adam_step(std::span<Tensor<float>* const>, std::span<const Tensor<float>>,
                        OptimizerState<float>&, double, const AdamConfig&);
template void adam_step(std::span<Tensor<double>* const>, std::span<const Tensor<double>>,
                        OptimizerState<double>&, double, const AdamConfig&);
template void sgd_step(std::span<Tensor<float>* const>, std::span<const Tensor<float>>,
                       OptimizerState<float>&, double, double);
template void sgd_step(std::span<Tensor<double>* const>, std::span<const Tensor<double>>,
                       OptimizerState<double>&, double, double);

}  // namespace cxr
