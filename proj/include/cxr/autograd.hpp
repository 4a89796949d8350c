#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cxr/tensor.hpp"

namespace cxr {

template <typename T>
class Tape;

// Handle to a value recorded on a Tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
};

template <typename T>
struct Gradients {
  // Aligned with the `wrt` list passed to Tape::backward.
  std::vector<Tensor<T>> values;
  // One entry per requested variable the loss does not depend on; its gradient is zero.
  std::vector<std::string> diagnostics;
};

// Ordered record of executed ops. Single-writer: one forward/backward pass owns it.
template <typename T>
class Tape {
 public:
  // Receives the output gradient and accumulates into input gradients via grad_slot().
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf that gradients flow into.
  Var<T> variable(Tensor<T> value);
  // Leaf excluded from differentiation.
  Var<T> constant(Tensor<T> value);

  // Appends an op output. `backward` may be empty when no input requires a gradient.
  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn backward);

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Zero-initialized on first use; nullptr for nodes that do not require a gradient.
  Tensor<T>* grad_slot(std::size_t id);

  // Reverse sweep from a scalar loss. Visits ops in exact reverse execution order.
  Gradients<T> backward(Var<T> loss, std::span<const Var<T>> wrt);

  // Ids of ops visited by the most recent backward(), in visit order.
  const std::vector<std::size_t>& last_visit_order() const { return visit_order_; }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  void check_owned(Var<T> v, const char* what) const;

  std::vector<Node> nodes_;
  std::vector<std::size_t> visit_order_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape->value(id);
}

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace cxr
