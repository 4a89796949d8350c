#include "cxr/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cxr {

namespace {

template <typename T>
void check_loss_inputs(const Tensor<T>& probs, const Tensor<T>& targets,
                       const Tensor<T>& class_weights) {
  if (probs.rank() != 2) {
    throw std::invalid_argument("cross_entropy: probabilities must be [N,K], got " +
                                to_string(probs.shape()));
  }
  if (probs.shape() != targets.shape()) {
    throw std::invalid_argument("cross_entropy: class count mismatch between probabilities " +
                                to_string(probs.shape()) + " and labels " +
                                to_string(targets.shape()));
  }
  if (!class_weights.empty() && class_weights.shape() != Shape{probs.dim(1)}) {
    throw std::invalid_argument("cross_entropy: class weights " + to_string(class_weights.shape()) +
                                " do not match " + std::to_string(probs.dim(1)) + " classes");
  }
  const std::size_t k = probs.dim(1);
  for (std::size_t i = 0; i < probs.dim(0); ++i) {
    T p_sum{0}, t_sum{0};
    for (std::size_t j = 0; j < k; ++j) {
      p_sum += probs.at(i, j);
      t_sum += targets.at(i, j);
    }
    if (std::abs(p_sum - T{1}) > T(1e-3) || std::abs(t_sum - T{1}) > T(1e-3)) {
      throw std::invalid_argument("cross_entropy: row " + std::to_string(i) +
                                  " of probabilities or labels does not sum to 1");
    }
  }
}

template <typename T>
std::size_t row_argmax(const T* row, std::size_t k) {
  return static_cast<std::size_t>(std::max_element(row, row + k) - row);
}

template <typename T>
T sample_weight(const Tensor<T>& class_weights, const T* target_row, std::size_t k) {
  return class_weights.empty() ? T{1} : class_weights[row_argmax(target_row, k)];
}

template <typename T>
T clamped_log(T p) {
  return std::log(std::max(p, static_cast<T>(kProbabilityFloor)));
}

}  // namespace

template <typename T>
Tensor<T> label_smooth(const Tensor<T>& one_hot, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon < 1.0)) {
    throw std::invalid_argument("label_smooth: epsilon must lie in [0,1), got " +
                                std::to_string(epsilon));
  }
  if (one_hot.rank() != 2 || one_hot.dim(1) < 2) {
    throw std::invalid_argument("label_smooth: labels must be [N,K] with K >= 2, got " +
                                to_string(one_hot.shape()));
  }
  const std::size_t k = one_hot.dim(1);
  const T on = static_cast<T>(1.0 - epsilon);
  const T off = static_cast<T>(epsilon / static_cast<double>(k - 1));
  Tensor<T> out(one_hot.shape());
  for (std::size_t i = 0; i < one_hot.dim(0); ++i) {
    const std::size_t truth = row_argmax(one_hot.raw() + i * k, k);
    for (std::size_t j = 0; j < k; ++j) out.at(i, j) = j == truth ? on : off;
  }
  return out;
}

template <typename T>
T cross_entropy(const Tensor<T>& probs, const Tensor<T>& targets, const Tensor<T>& class_weights) {
  check_loss_inputs(probs, targets, class_weights);
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  T total{0};
  for (std::size_t i = 0; i < n; ++i) {
    const T* p = probs.raw() + i * k;
    const T* t = targets.raw() + i * k;
    T sample{0};
    for (std::size_t j = 0; j < k; ++j) sample -= t[j] * clamped_log(p[j]);
    total += sample_weight(class_weights, t, k) * sample;
  }
  return total / static_cast<T>(n);
}

template <typename T>
T smoothed_cross_entropy(const Tensor<T>& probs, const Tensor<T>& one_hot, double epsilon,
                         const Tensor<T>& class_weights) {
  return cross_entropy(probs, label_smooth(one_hot, epsilon), class_weights);
}

template <typename T>
Tensor<T> per_sample_cross_entropy(const Tensor<T>& probs, const Tensor<T>& targets) {
  check_loss_inputs(probs, targets, Tensor<T>());
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  Tensor<T> out(Shape{n});
  for (std::size_t i = 0; i < n; ++i) {
    T sample{0};
    for (std::size_t j = 0; j < k; ++j) sample -= targets.at(i, j) * clamped_log(probs.at(i, j));
    out[i] = sample;
  }
  return out;
}

template <typename T>
Var<T> cross_entropy(Var<T> probs, const Tensor<T>& targets, const Tensor<T>& class_weights) {
  const T loss = cross_entropy(probs.value(), targets, class_weights);
  const std::size_t p_id = probs.id;
  return probs.tape->record(Tensor<T>::scalar(loss), {probs},
      [p_id, targets, class_weights](Tape<T>& t, const Tensor<T>& grad) {
        Tensor<T>* gp = t.grad_slot(p_id);
        if (!gp) return;
        const Tensor<T>& p = t.value(p_id);
        const std::size_t n = p.dim(0), k = p.dim(1);
        const T scale = grad[0] / static_cast<T>(n);
        const T floor = static_cast<T>(kProbabilityFloor);
        for (std::size_t i = 0; i < n; ++i) {
          const T* tr = targets.raw() + i * k;
          const T w = sample_weight(class_weights, tr, k);
          for (std::size_t j = 0; j < k; ++j) {
            const T pj = p.at(i, j);
            // The clamp is flat below the floor.
            if (pj > floor) gp->at(i, j) -= scale * w * tr[j] / pj;
          }
        }
      });
}

template <typename T>
Tensor<T> one_hot(const std::vector<std::size_t>& labels, std::size_t classes) {
  if (labels.empty()) throw std::invalid_argument("one_hot: no labels");
  Tensor<T> out(Shape{labels.size(), classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) {
      throw std::invalid_argument("one_hot: label " + std::to_string(labels[i]) +
                                  " out of range for " + std::to_string(classes) + " classes");
    }
    out.at(i, labels[i]) = T{1};
  }
  return out;
}

#define CXR_INSTANTIATE_LOSS(T)                                                             \
  template Tensor<T> label_smooth(const Tensor<T>&, double);                                \
  template T cross_entropy(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);           \
  template T smoothed_cross_entropy(const Tensor<T>&, const Tensor<T>&, double,             \
                                    const Tensor<T>&);                                      \
  template Var<T> cross_entropy(Var<T>, const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> per_sample_cross_entropy(const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> one_hot(const std::vector<std::size_t>&, std::size_t);

CXR_INSTANTIATE_LOSS(float)
CXR_INSTANTIATE_LOSS(double)

#undef CXR_INSTANTIATE_LOSS

}  // namespace cxr
