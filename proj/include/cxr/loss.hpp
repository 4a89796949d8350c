#pragma once

#include <cstddef>
#include <vector>

#include "cxr/autograd.hpp"
#include "cxr/tensor.hpp"

namespace cxr {

// Probabilities are clamped below at this value before taking the log.
inline constexpr double kProbabilityFloor = 1e-12;

// Replaces each one-hot row with 1-eps on the true class and eps/(K-1) elsewhere.
// Throws for eps outside [0,1) or K < 2.
template <typename T>
Tensor<T> label_smooth(const Tensor<T>& one_hot, double epsilon);

// Mean over samples of w[c(i)] * -sum_j t[i,j] log p[i,j], where c(i) is the argmax
// of the target row (lowest index on ties). `class_weights` may be empty (all ones).
template <typename T>
T cross_entropy(const Tensor<T>& probs, const Tensor<T>& targets,
                const Tensor<T>& class_weights = {});

// cross_entropy against label_smooth(one_hot, epsilon).
template <typename T>
T smoothed_cross_entropy(const Tensor<T>& probs, const Tensor<T>& one_hot, double epsilon,
                         const Tensor<T>& class_weights = {});

// Recorded cross-entropy; differentiable with respect to `probs`.
template <typename T>
Var<T> cross_entropy(Var<T> probs, const Tensor<T>& targets, const Tensor<T>& class_weights = {});

// Per-sample unweighted losses, used by diagnostics and tests.
template <typename T>
Tensor<T> per_sample_cross_entropy(const Tensor<T>& probs, const Tensor<T>& targets);

// One-hot [N,K] rows from class indices.
template <typename T>
Tensor<T> one_hot(const std::vector<std::size_t>& labels, std::size_t classes);

}  // namespace cxr
