#include "cxr/autograd.hpp"

#include <stdexcept>

namespace cxr {

template <typename T>
void Tape<T>::check_owned(Var<T> v, const char* what) const {
  if (v.tape != this || v.id >= nodes_.size()) {
    throw std::invalid_argument(std::string(what) + ": variable does not belong to this tape");
  }
}

template <typename T>
Var<T> Tape<T>::variable(Tensor<T> value) {
  nodes_.push_back(Node{std::move(value), {}, true, {}});
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn backward) {
  bool needs = false;
  for (const auto& in : inputs) {
    check_owned(in, "record");
    needs = needs || nodes_[in.id].requires_grad;
  }
  if (!needs) backward = nullptr;
  nodes_.push_back(Node{std::move(value), {}, needs, std::move(backward)});
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Tensor<T>* Tape<T>::grad_slot(std::size_t id) {
  auto& node = nodes_.at(id);
  if (!node.requires_grad) return nullptr;
  if (node.grad.empty()) node.grad = Tensor<T>(node.value.shape());
  return &node.grad;
}

template <typename T>
Gradients<T> Tape<T>::backward(Var<T> loss, std::span<const Var<T>> wrt) {
  check_owned(loss, "backward");
  if (nodes_[loss.id].value.size() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                to_string(nodes_[loss.id].value.shape()));
  }
  for (const auto& v : wrt) check_owned(v, "backward");

  for (auto& node : nodes_) node.grad = Tensor<T>();
  visit_order_.clear();

  if (auto* seed = grad_slot(loss.id)) seed->fill(T{1});
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    auto& node = nodes_[id];
    if (node.grad.empty() || !node.backward) continue;
    visit_order_.push_back(id);
    // The callback may grow other nodes' grads but never reallocates nodes_.
    node.backward(*this, node.grad);
  }

  Gradients<T> out;
  out.values.reserve(wrt.size());
  for (std::size_t i = 0; i < wrt.size(); ++i) {
    const auto& node = nodes_[wrt[i].id];
    if (node.grad.empty()) {
      out.values.emplace_back(node.value.shape());
      out.diagnostics.push_back("variable #" + std::to_string(i) + " (tape id " +
                                std::to_string(wrt[i].id) +
                                ") is not reachable from the loss; gradient set to zero");
    } else {
      out.values.push_back(node.grad);
    }
  }
  return out;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace cxr
